"""Stokes initial guess, Arrow-Hurwicz iteration and backward Euler.

The steady problem is: find (u, p) with

    nu a_h(u, v) + N~_h(u; u, v) + b(v, p) = (f, Pi0 v),   b(u, q) = 0,

with b(v, q) = int div(v) q and the pressure normalized to zero mean.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure of a factorization or a diverging iteration."""


@dataclass
class AHParams:
    nu: float
    rho: float | None = None
    alpha: float | None = None
    tol: float | None = None  # None: h**4 with h = sqrt(|Omega| / #cells)
    max_iter: int = 2000
    stop_norm: str = "coefficient"  # or "l2": sqrt(dp^T C dp)
    substep: str = "auto"  # "direct", "reuse" or "auto"
    refine_tol: float = 1e-13
    stokes: str = "auto"  # "saddle", "augmented" or "auto"

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.rho is None:
            self.rho = 1.0 / (2.0 * self.nu)
        if self.alpha is None:
            self.alpha = self.rho ** 2
        for name in ("nu", "rho", "alpha"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.stop_norm not in ("coefficient", "l2"):
            raise ValueError(f"unknown stop_norm {self.stop_norm!r}")
        if self.stokes not in ("auto", "saddle", "augmented"):
            raise ValueError(f"unknown stokes method {self.stokes!r}")
        if self.substep not in ("auto", "direct", "reuse"):
            raise ValueError(f"unknown substep {self.substep!r}")

    @classmethod
    def cavity(cls, Re=100.0, **kw):
        return cls(nu=1.0 / Re, rho=1.2, alpha=0.7 * Re, **kw)

    def stopping_tol(self, h):
        return self.tol if self.tol is not None else h ** 4


@dataclass
class AHState:
    chi: np.ndarray
    p: np.ndarray
    lam: float = 0.0
    n: int = 0
    increments: list = field(default_factory=list)  # in the stopping norm
    l2_increments: list = field(default_factory=list)  # sqrt(dp^T C dp)
    converged: bool = False
    t: float | None = None

    def to_dict(self):
        return {
            "chi": self.chi.tolist(),
            "p": self.p.tolist(),
            "lambda": self.lam,
            "iterations": self.n,
            "converged": self.converged,
            "increments": list(self.increments),
            "l2_increments": list(self.l2_increments),
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


# ------------------------------------------------------------- operators


class AHOperators:
    """Matrices and factorizations shared by all iterations of one solve.

    ``A_values`` and ``F`` default to the system's; backward Euler passes
    the mass-augmented versions.
    """

    def __init__(self, system, params, A_values=None, F=None):
        self.system = system
        self.params = params
        dm = system.dofmap
        self.free = dm.free
        self.fixed = dm.fixed
        self.g = system.g
        self.A_values = system.A_values if A_values is None else A_values
        self.A = system.A if A_values is None else system.scatter(self.A_values)
        self.F = system.F if F is None else F
        self.B = system.B.tocsr()
        self.BT = self.B.T.tocsr()
        self.C = system.C
        # C is block diagonal with 3x3 blocks: invert blockwise
        blocks = [np.linalg.inv(P.H1) for P in system.projectors]
        self.Cinv = sp.block_diag(blocks, format="csr")
        self.d = system.d
        self.Cinv_d = self.Cinv @ self.d
        self.dCd = float(self.d @ self.Cinv_d)
        self.Ag_rho = self.A @ self.g / params.rho
        mode = params.substep
        if mode == "auto":
            mode = "reuse" if len(self.free) > AUTO_REUSE_THRESHOLD else "direct"
        self.substep = mode
        self._lu = None
        self._perm = None
        self._factor_seconds = 0.0
        self._refine_seconds = 0.0
        self._base_passes = None
        self.factorizations = 0
        self.refinement_passes = 0

    def stop_norm(self, q):
        if self.params.stop_norm == "l2":
            return self.l2_norm(q)
        return float(np.linalg.norm(q))

    def l2_norm(self, q):
        return float(np.sqrt(max(q @ (self.C @ q), 0.0)))

    def dual_norm(self, r):
        """sqrt(r^T C^{-1} r), the L2 norm of the pressure-space Riesz
        representative of a moment vector r."""
        return float(np.sqrt(max(r @ (self.Cinv @ r), 0.0)))

    def divergence_certificate(self, chi):
        return self.dual_norm(self.BT @ chi)


AUTO_REUSE_THRESHOLD = 1000  # free velocity DoFs
AUTO_AUGMENTED_THRESHOLD = 20000
MAX_REFINEMENT_PASSES = 40
STAGNATION = 0.9  # required residual reduction per refinement pass
AUGMENTED_PENALTY = 1e3  # gamma / nu


def _factorize(K, what):
    try:
        return spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"{what} factorization failed: {exc}") from exc


def solve_stokes_init(system, params, ops=None):
    """Step 1: the Stokes pair (no convection term).

    Small problems factor the bordered saddle system directly. Large ones
    use iterated augmented Lagrangian steps with the penalty B C^-1 B^T,
    which is cell-local because the pressure space contains the discrete
    divergence; both give the same pair up to round-off.
    """
    ops = ops or AHOperators(system, params)
    method = params.stokes
    if method == "auto":
        method = "augmented" if len(ops.free) > AUTO_AUGMENTED_THRESHOLD else "saddle"
    if method == "saddle":
        return _stokes_saddle(system, params, ops)
    return _stokes_augmented(system, params, ops)


def _stokes_saddle(system, params, ops):
    nu = params.nu
    free, g = ops.free, ops.g
    A = ops.A
    Aff = A[free][:, free]
    Bf = ops.B[free]
    M = system.M
    d = sp.csr_matrix(ops.d.reshape(-1, 1))
    K = sp.bmat(
        [
            [nu * Aff, Bf, None],
            [Bf.T, None, d],
            [None, d.T, None],
        ],
        format="csc",
    )
    rhs = np.concatenate(
        [
            ops.F[free] - nu * (A @ g)[free],
            -(ops.BT @ g),
            [0.0],
        ]
    )
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SolverError(
            f"Stokes saddle system is singular ({exc}); the mesh probably violates the inf-sup condition"
        ) from exc
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverError("Stokes solve produced non-finite values")
    chi = g.copy()
    chi[free] = sol[: len(free)]
    p = sol[len(free): len(free) + M]
    return AHState(chi=chi, p=p, lam=float(sol[-1]), n=0)


def _mean_free(ops, r):
    """Split a moment vector r = r0 + d lam with d^T C^-1 r0 = 0."""
    lam = float(ops.Cinv_d @ r) / ops.dCd
    return r - ops.d * lam, lam


def _stokes_augmented(system, params, ops, max_iter=60, rtol=1e-13):
    nu = params.nu
    free, g = ops.free, ops.g
    gamma = AUGMENTED_PENALTY * nu
    P = ops.B @ ops.Cinv @ ops.BT
    K = (nu * ops.A + gamma * P).tocsr()
    Kff = K[free][:, free]
    lu = _factorize(Kff, "augmented Stokes")
    Kg = K @ g
    p = np.zeros(system.M)
    chi = g.copy()
    lam = 0.0
    prev = np.inf
    for _ in range(max_iter):
        rhs = ops.F - ops.B @ p - Kg
        chi[free] = lu.solve(rhs[free])
        div, lam = _mean_free(ops, ops.BT @ chi)
        dp = gamma * (ops.Cinv @ div)
        p = p + dp
        # dp = gamma C^-1 div, so this also bounds the divergence;
        # stagnation means the round-off floor has been reached
        inc = ops.l2_norm(dp)
        if inc <= rtol * max(ops.l2_norm(p), 1.0) or inc > 0.5 * prev:
            break
        prev = inc
    else:
        log.warning("augmented Stokes solve did not reach round-off in %d steps", max_iter)
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(p))):
        raise SolverError("Stokes solve produced non-finite values")
    p, _ = _mean_free_pressure(ops, p)
    return AHState(chi=chi, p=p, lam=lam, n=0)


def _mean_free_pressure(ops, p):
    mean = float(ops.d @ p) / ops.dCd
    return p - ops.Cinv_d * mean, mean


class _PermutedLU:
    """LU of Q^T K Q for a fixed symmetric permutation Q."""

    def __init__(self, lu, q):
        self.lu, self.q = lu, q

    def solve(self, b):
        x = np.empty_like(b)
        x[self.q] = self.lu.solve(b[self.q])
        return x


def _factor_velocity(ops, Kff):
    """Factor the velocity matrix. The fill-reducing ordering comes from the
    first factorization and is reused, since the sparsity pattern is fixed."""
    t0 = time.perf_counter()
    if ops._perm is None:
        lu = _factorize(Kff, "velocity substep")
        ops._perm = np.argsort(lu.perm_c)
    else:
        q = ops._perm
        try:
            lu = _PermutedLU(spla.splu(Kff[q][:, q].tocsc(), permc_spec="NATURAL"), q)
        except RuntimeError as exc:
            raise SolverError(f"velocity substep factorization failed: {exc}") from exc
    ops._lu = lu
    ops.factorizations += 1
    ops._factor_seconds = time.perf_counter() - t0
    ops._refine_seconds = 0.0
    return lu


def _solve_substep(ops, Kff, b, x0):
    """Solve Kff x = b.

    "direct" factors every call. "reuse" runs iterative refinement from x0
    with the last factorization until the residual is at ``refine_tol``.
    It refactors when refinement stagnates, and once the passes in excess
    of those needed right after a factorization have cost as much as one
    factorization.
    """
    if ops.substep == "direct":
        return _factor_velocity(ops, Kff).solve(b)
    if ops._lu is None or ops._refine_seconds > ops._factor_seconds:
        _factor_velocity(ops, Kff)
        ops._base_passes = None
    t0 = time.perf_counter()
    tol = ops.params.refine_tol * max(np.linalg.norm(b), np.finfo(float).tiny)
    x = x0.copy()
    r = b - Kff @ x
    rn = np.linalg.norm(r)
    passes = 0
    for passes in range(1, MAX_REFINEMENT_PASSES + 1):
        if rn <= tol:
            passes -= 1
            break
        x += ops._lu.solve(r)
        r = b - Kff @ x
        rn_new = np.linalg.norm(r)
        if not rn_new < STAGNATION * rn:
            rn = np.inf
            break
        rn = rn_new
    ops.refinement_passes += passes
    if rn <= tol:
        if ops._base_passes is None:
            ops._base_passes = passes
        elif passes > ops._base_passes:
            dt = time.perf_counter() - t0
            ops._refine_seconds += dt * (passes - ops._base_passes) / passes
        return x
    # stagnation: refactor at the current matrix
    lu = _factor_velocity(ops, Kff)
    ops._base_passes = None
    x = lu.solve(b)
    for _ in range(2):
        r = b - Kff @ x
        if np.linalg.norm(r) <= tol:
            break
        x += lu.solve(r)
    return x


def velocity_step(ops, state):
    """(rho^-1 A + N~2(chi^n)) chi = (rho^-1 - nu) A chi^n - B p^n + F."""
    prm, system = ops.params, ops.system
    N2_values = system.nonlinear_values(state.chi)
    K_values = ops.A_values / prm.rho + N2_values
    Kff = system.scatter_free(K_values)
    Kg = ops.Ag_rho + system.local_matvec(N2_values, ops.g)
    rhs = (1.0 / prm.rho - prm.nu) * (ops.A @ state.chi) - ops.B @ state.p + ops.F
    chi = ops.g.copy()
    chi[ops.free] = _solve_substep(ops, Kff, rhs[ops.free] - Kg[ops.free], state.chi[ops.free])
    return chi


def pressure_step(ops, p, chi):
    """alpha C p' + d lambda = alpha C p + rho B^T chi, d^T p' = 0."""
    prm = ops.params
    r = prm.alpha * (ops.C @ p) + prm.rho * (ops.BT @ chi)
    lam = float(ops.Cinv_d @ r) / ops.dCd
    p_new = ops.Cinv @ (r - ops.d * lam) / prm.alpha
    return p_new, lam


def ah_step(system, state, params, ops=None):
    """One Arrow-Hurwicz iteration; returns a new state."""
    ops = ops or AHOperators(system, params)
    chi = velocity_step(ops, state)
    p, lam = pressure_step(ops, state.p, chi)
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(p))):
        raise SolverError(
            "Arrow-Hurwicz iterate is not finite; try a smaller rho inside the admissible region"
        )
    dp = p - state.p
    return AHState(
        chi=chi,
        p=p,
        lam=lam,
        n=state.n + 1,
        increments=state.increments + [ops.stop_norm(dp)],
        l2_increments=state.l2_increments + [ops.l2_norm(dp)],
    )


@dataclass
class Telemetry:
    rows: list = field(default_factory=list)

    def record(self, n, dp_norm, lam, seconds):
        self.rows.append({"n": n, "dp_norm": dp_norm, "lambda": lam, "seconds": seconds})

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["n", "dp_norm", "lambda", "seconds"])
            w.writeheader()
            for row in self.rows:
                w.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})


def ah_solve(system, params, state=None, ops=None, h=None, callback=None):
    """Stokes initial guess followed by A-H iterations until the pressure
    increment drops below ``params.tol`` (default h^4, h the mesh size)."""
    ops = ops or AHOperators(system, params)
    tol = params.stopping_tol(system.mesh_size if h is None else h)
    t0 = time.perf_counter()
    tele = Telemetry()
    if state is None:
        state = solve_stokes_init(system, params, ops)
    tele.record(0, float("nan"), state.lam, time.perf_counter() - t0)
    if not np.any(state.chi):
        # zero velocity: the convection term vanishes and the Stokes pair is
        # already a fixed point of the iteration
        state.converged = True
        return state, tele
    while state.n < params.max_iter:
        state = ah_step(system, state, params, ops)
        inc = state.increments[-1]
        tele.record(state.n, inc, state.lam, time.perf_counter() - t0)
        if callback is not None:
            callback(state)
        if inc < tol:
            state.converged = True
            break
    else:
        log.warning("A-H iteration stopped at max_iter=%d (last increment %.3e, tol %.3e)",
                    params.max_iter, state.increments[-1], tol)
    return state, tele


# ------------------------------------------------------------- diagnostics


def parameter_diagnostics(params, alpha_lower=1.0, alpha_upper=1.0, Lambda=0.0):
    """Evaluate the sufficient condition for convergence of the iteration.

    ``alpha_lower`` and ``alpha_upper`` are the norm-equivalence constants of
    the discrete bilinear form and ``Lambda`` the scaled continuity bound of
    the convection term; none of them is computable, so callers supply
    estimates. The report is advisory only.
    """
    nu, rho, alpha = params.nu, params.rho, params.alpha
    lhs = alpha_upper * abs(1 - rho * nu) + rho * alpha_lower * nu * Lambda + rho ** 2 / (2 * alpha)
    report = {
        "lhs": lhs,
        "rhs": alpha_lower,
        "satisfied": bool(Lambda < 1 and lhs < alpha_lower),
        "branch": "rho<=1/nu" if rho <= 1 / nu else "rho>1/nu",
    }
    if rho <= 1 / nu:
        rho_min = (alpha_upper - alpha_lower) / (nu * (alpha_upper - alpha_lower * Lambda))
        denom = alpha_lower - alpha_upper + rho * nu * (alpha_upper - alpha_lower * Lambda)
        report["rho_range"] = (rho_min, 1 / nu)
    else:
        rho_max = (alpha_upper + alpha_lower) / (nu * (alpha_upper + alpha_lower * Lambda))
        denom = alpha_upper + alpha_lower - rho * nu * (alpha_upper + alpha_lower * Lambda)
        report["rho_range"] = (1 / nu, rho_max)
    report["alpha_min"] = rho ** 2 / (2 * denom) if denom > 0 else math.inf
    lo, hi = report["rho_range"]
    report["rho_in_range"] = bool(lo < rho <= hi) if rho <= 1 / nu else bool(lo < rho < hi)
    return report


# ------------------------------------------------------------- unsteady


def backward_euler_solve(system, params, dt, t_end, u_initial, forcing=None, boundary=None,
                         callback=None, warm_start=True):
    """Backward Euler in time, one A-H solve per step.

    ``forcing(t)`` and ``boundary(t)`` return spatial closures (or None);
    with a time-dependent boundary the prescribed values are refreshed on
    every step. With ``warm_start`` each A-H solve starts from the previous
    time level instead of a fresh Stokes solve. Returns the list of states,
    one per time level after t=0.
    """
    from .assembly import boundary_values

    if dt <= 0:
        raise ValueError("dt must be positive")
    # shrink dt slightly so the last step lands on t_end
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    dt = t_end / n_steps
    M = system.mass_matrix()
    # nu A_aug = nu A + M / dt, so the A-H update keeps its form
    A_values = system.A_values + system.mass_values() / (params.nu * dt)
    chi_prev = np.asarray(u_initial, dtype=float)
    states = []
    state = None
    for step in range(1, n_steps + 1):
        t = step * dt
        if boundary is not None:
            system.g, _ = boundary_values(system.mesh, system.dofmap, boundary(t))
        F = system.load(forcing(t) if forcing is not None else None) + M @ chi_prev / dt
        ops = AHOperators(system, params, A_values=A_values, F=F)
        init = None
        if warm_start and state is not None:
            init = AHState(chi=state.chi.copy(), p=state.p.copy(), lam=state.lam)
        try:
            state, _ = ah_solve(system, params, state=init, ops=ops)
        except SolverError as exc:
            raise SolverError(f"time step {step} (t={t:.6g}): {exc}") from exc
        state.t = t
        states.append(state)
        if callback is not None:
            callback(step, t, state)
        chi_prev = state.chi
    return states
