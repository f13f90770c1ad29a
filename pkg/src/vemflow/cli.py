"""Command line: ``vemflow solve | convergence | flow``.

Exit status: 0 success, 2 input error, 3 non-convergence, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .benchmarks import STEADY, UNSTEADY, UnsteadyCase, get_benchmark
from .mesh import MeshError
from .postprocess import export_field, sample_velocity_grid, write_error_table
from .solver import SolverError
from .study import build_mesh, contraction_ratio, convergence_table, make_params, solve_case, solve_unsteady

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("vemflow")

DEFAULT_FAMILY = {
    "example1": ["voronoi:32", "voronoi:64", "voronoi:128", "voronoi:256", "voronoi:512"],
    "example4": ["voronoi:32", "voronoi:64", "voronoi:128"],
}


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    mesh: str | None = None  # generator spec or JSON mesh path; comma list for convergence
    benchmark: str = "example1"
    nu: float | None = None
    rho: float | None = None
    alpha: float | None = None
    tol: float | None = None
    max_iter: int | None = None
    stop_norm: str | None = None
    substep: str | None = None
    dt: float | None = None
    t_end: float | None = None
    re: float | None = None
    out: str = "vemflow-out"
    seed: int = 1
    grid: int = 100
    field_format: str = "csv"
    export_matrices: bool = False
    dump_local: bool = False
    telemetry: bool = True
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.benchmark not in STEADY and self.benchmark not in UNSTEADY:
            raise InputError(f"unknown benchmark {self.benchmark!r}; choose from {sorted(STEADY) + sorted(UNSTEADY)}")
        for name in ("nu", "rho", "alpha", "tol", "dt", "t_end", "re"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InputError(f"--{name.replace('_', '-')} must be positive, got {v}")
        if self.max_iter is not None and self.max_iter < 1:
            raise InputError("--max-iter must be at least 1")
        if self.grid < 1:
            raise InputError("--grid must be at least 1")
        if self.command == "flow" and self.benchmark not in ("kovasznay", "cavity"):
            raise InputError("flow runs the kovasznay or cavity preset")


# ------------------------------------------------------------- helpers


def _case(cfg):
    kw = {}
    if cfg.benchmark in ("kovasznay", "cavity"):
        if cfg.re is not None:
            kw["Re"] = cfg.re
        elif cfg.nu is not None:
            kw["Re"] = 1.0 / cfg.nu
    elif cfg.nu is not None:
        kw["nu"] = cfg.nu
    if cfg.benchmark in UNSTEADY and cfg.t_end is not None:
        kw["t_end"] = cfg.t_end
    return get_benchmark(cfg.benchmark, **kw)


def _params(cfg, case):
    from .solver import AHParams

    over = dict(rho=cfg.rho, alpha=cfg.alpha, tol=cfg.tol, max_iter=cfg.max_iter,
                stop_norm=cfg.stop_norm, substep=cfg.substep)
    if isinstance(case, UnsteadyCase):
        return AHParams(nu=case.nu, **{k: v for k, v in over.items() if v is not None})
    if cfg.max_iter is None and case.name == "cavity":
        over["max_iter"] = 10000
    return make_params(case, **over)


def _mesh(spec, case, cfg):
    try:
        return build_mesh(spec, case, seed=cfg.seed)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    except (MeshError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"invalid mesh {spec!r}: {exc}") from exc


def _default_mesh(cfg, case):
    if cfg.mesh:
        return cfg.mesh
    return case.mesh


def _manifest(cfg, out, **extra):
    return {
        "config": asdict(cfg),
        "argv": sys.argv,
        "versions": {
            "vemflow": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": cfg.seed,
        **extra,
    }


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _print_summary(summary, stream=None):
    keys = ["dof", "cells", "h", "iterations", "converged", "erruH1", "errpL2", "divergence_certificate"]
    parts = [f"{k}={summary[k]:.6g}" if isinstance(summary[k], float) else f"{k}={summary[k]}"
             for k in keys if k in summary]
    print(" ".join(parts), file=stream or sys.stdout)


def _export_run(res, cfg, out, case):
    if cfg.telemetry and res.telemetry is not None:
        res.telemetry.write_csv(out / "telemetry.csv")
    res.state.dump(out / "state.json")
    if cfg.export_matrices:
        res.system.export_matrices(out / "matrices")
    if cfg.dump_local:
        _write_json(out / "local_matrices.json", [P.to_dict() for P in res.system.projectors])


# ------------------------------------------------------------- commands


def cmd_solve(cfg):
    case = _case(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = _mesh(_default_mesh(cfg, case), case, cfg)
    params = _params(cfg, case)
    if isinstance(case, UnsteadyCase):
        res = solve_unsteady(case, mesh, params, dt=cfg.dt, t_end=cfg.t_end)
        converged = all(s.converged for s in res.states)
    else:
        res = solve_case(case, mesh, params)
        converged = res.state.converged
    _export_run(res, cfg, out, case)
    summary = res.summary()
    summary["converged"] = converged
    _print_summary(summary)
    _write_json(out / "manifest.json", _manifest(cfg, out, params=asdict(params), result=summary))
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_convergence(cfg):
    case = _case(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = cfg.mesh.split(",") if cfg.mesh else DEFAULT_FAMILY.get(cfg.benchmark, [case.mesh])
    params = _params(cfg, case)
    results, status = [], EXIT_OK
    try:
        for spec in specs:
            mesh = _mesh(spec.strip(), case, cfg)
            if isinstance(case, UnsteadyCase):
                res = solve_unsteady(case, mesh, params, dt=cfg.dt, t_end=cfg.t_end)
                ok = all(s.converged for s in res.states)
            else:
                if not case.has_exact:
                    raise InputError(f"benchmark {case.name!r} has no exact solution")
                res = solve_case(case, mesh, params)
                ok = res.state.converged
            results.append(res)
            _print_summary(res.summary())
            if not ok:
                status = EXIT_NOT_CONVERGED
    finally:
        # flush whatever finished
        rows, rates = convergence_table(results) if results else ([], {"erruH1": None, "errpL2": None})
        write_error_table(rows, out / "errors.csv")
        contraction = [contraction_ratio(r.state.increments) for r in results if r.states is None]
        _write_json(out / "manifest.json", _manifest(cfg, out, params=asdict(params), meshes=specs,
                                                     rows=rows, rates=rates, contraction=contraction))
    for k, v in rates.items():
        print(f"rate {k}: " + ("n/a (single mesh)" if v is None else f"{v:.4f}"))
    return status


def cmd_flow(cfg):
    case = _case(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = _mesh(_default_mesh(cfg, case), case, cfg)
    params = _params(cfg, case)
    res = solve_case(case, mesh, params)
    _export_run(res, cfg, out, case)
    field_ = sample_velocity_grid(res.system, res.state.chi, cfg.grid, cfg.grid, case.domain)
    suffix = "vtk" if cfg.field_format == "vtk_legacy" else "csv"
    export_field(field_, out / f"field.{suffix}", cfg.field_format)
    summary = res.summary()
    if case.has_exact:
        from .postprocess import grid_relative_error

        summary["grid_rel_err_u1"] = grid_relative_error(field_, case.velocity, interior=True)
    _print_summary(summary)
    _write_json(out / "manifest.json", _manifest(cfg, out, params=asdict(params), result=summary))
    return EXIT_OK if res.state.converged else EXIT_NOT_CONVERGED


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "flow": cmd_flow}


# ------------------------------------------------------------- parsing


def build_parser():
    p = argparse.ArgumentParser(prog="vemflow", description="Divergence-free VEM Navier-Stokes solver.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("solve", "solve one benchmark on one mesh"),
                        ("convergence", "error table and fitted rates over a mesh family"),
                        ("flow", "Kovasznay or cavity preset with a sampled velocity field")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
        s.add_argument("--mesh", help="quad:NxM, triangle:NxM, voronoi:N or a JSON mesh file"
                       + ("; comma-separated for a family" if name == "convergence" else ""))
        s.add_argument("--benchmark", choices=sorted(STEADY) + sorted(UNSTEADY))
        s.add_argument("--nu", type=float)
        s.add_argument("--re", type=float, help="Reynolds number for the flow presets")
        s.add_argument("--rho", type=float)
        s.add_argument("--alpha", type=float)
        s.add_argument("--tol", type=float, help="stopping tolerance (default h^4)")
        s.add_argument("--max-iter", type=int)
        s.add_argument("--stop-norm", choices=["coefficient", "l2"])
        s.add_argument("--substep", choices=["auto", "direct", "reuse"])
        s.add_argument("--dt", type=float)
        s.add_argument("--t-end", type=float)
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        s.add_argument("--grid", type=int, help="grid intervals per side for field sampling")
        s.add_argument("--field-format", choices=["csv", "vtk_legacy"])
        s.add_argument("--export-matrices", action="store_true", default=None)
        s.add_argument("--dump-local", action="store_true", default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns):
    data = {}
    if ns.config:
        path = Path(ns.config)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            data[f.name] = v
    data["command"] = ns.command
    if ns.command == "flow":
        data.setdefault("benchmark", "cavity")
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
