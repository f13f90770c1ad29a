"""Run helpers shared by the command line, the demos and the tests."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_global
from .benchmarks import BenchmarkCase, UnsteadyCase
from .mesh import mesh_size, parse_mesh_spec
from .postprocess import fit_rate, h1_velocity_error, interpolate, l2_pressure_error
from .solver import AHOperators, AHParams, ah_solve, backward_euler_solve

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    system: object
    state: object
    telemetry: object = None
    errors: dict = field(default_factory=dict)
    seconds: float = 0.0
    ops: object = None
    states: list | None = None  # every time level of an unsteady run

    def summary(self):
        s = self.system
        out = {
            "dof": int(s.N),
            "pressure_dof": int(s.M),
            "cells": int(s.mesh.n_cells),
            "h": float(s.mesh_size),
            "h_max": float(s.h),
            "iterations": int(self.state.n),
            "converged": bool(self.state.converged),
            "lambda": float(self.state.lam),
            "seconds": self.seconds,
        }
        if self.ops is not None:
            out["divergence_certificate"] = self.ops.divergence_certificate(self.state.chi)
            out["factorizations"] = self.ops.factorizations
        out.update(self.errors)
        return out


def make_params(case, nu=None, **overrides):
    """Solver parameters: the case preset, then explicit overrides."""
    kw = dict(case.params) if isinstance(case, BenchmarkCase) else {}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return AHParams(nu=case.nu if nu is None else nu, **kw)


def build_mesh(spec, case, seed=1):
    return parse_mesh_spec(spec, domain=case.domain, seed=seed)


def solve_case(case, mesh, params=None, callback=None):
    """Assemble and solve a steady benchmark; errors are filled in when the
    exact solution is known."""
    params = params or make_params(case)
    t0 = time.perf_counter()
    system = assemble_global(mesh, case.boundary, case.forcing)
    ops = AHOperators(system, params)
    state, tele = ah_solve(system, params, ops=ops, callback=callback)
    res = RunResult(system, state, tele, seconds=time.perf_counter() - t0, ops=ops)
    if case.has_exact:
        res.errors = {
            "erruH1": h1_velocity_error(system, state.chi, case.gradient),
            "errpL2": l2_pressure_error(system, state.p, case.pressure),
        }
    return res


def solve_unsteady(case: UnsteadyCase, mesh, params=None, dt=None, t_end=None, callback=None):
    """Backward Euler run; dt defaults to h^2 with h the mesh size."""
    params = params or AHParams(nu=case.nu)
    h = mesh_size(mesh)
    dt = h ** 2 if dt is None else dt
    t_end = case.t_end if t_end is None else t_end
    t0 = time.perf_counter()
    c0 = case.at(0.0)
    system = assemble_global(mesh, c0.boundary, c0.forcing)
    u0 = interpolate(system, c0.velocity)
    states = backward_euler_solve(
        system, params, dt, t_end, u0,
        forcing=lambda t: case.at(t).forcing,
        boundary=lambda t: case.at(t).boundary,
        callback=callback,
    )
    last = states[-1]
    exact = case.at(last.t)
    ops = AHOperators(system, params)  # for the divergence certificate
    res = RunResult(system, last, seconds=time.perf_counter() - t0, ops=ops, states=states)
    res.errors = {
        "erruH1": h1_velocity_error(system, last.chi, exact.gradient),
        "errpL2": l2_pressure_error(system, last.p, exact.pressure),
        "dt": states[0].t,
        "steps": len(states),
        "t_final": last.t,
        "total_iterations": int(sum(s.n for s in states)),
    }
    return res


def convergence_table(results):
    """Error-table rows (dof, h, erruH1, errpL2, iterations) and fitted
    slopes; slopes are None for fewer than two meshes."""
    rows = []
    for r in results:
        rows.append({
            "dof": int(r.system.N),
            "h": float(r.system.mesh_size),
            "erruH1": float(r.errors["erruH1"]),
            "errpL2": float(r.errors["errpL2"]),
            "iterations": int(r.errors.get("total_iterations", r.state.n)),
        })
    if len(rows) < 2:
        return rows, {"erruH1": None, "errpL2": None}
    h = [r["h"] for r in rows]
    rates = {k: fit_rate(h, [r[k] for r in rows]) for k in ("erruH1", "errpL2")}
    return rows, rates


def contraction_ratio(increments, last=5):
    """Mean of |dp^{n+1}| / |dp^n| over the final ``last`` ratios."""
    inc = np.asarray(increments, dtype=float)
    if len(inc) < 2:
        return float("nan")
    ratios = inc[1:] / inc[:-1]
    return float(np.mean(ratios[-last:]))
