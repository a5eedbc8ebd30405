"""Implicit time stepping for the regularised nonlocal and the local system.

One step solves, for ``u = u^{n+1}``,

    (u - u^n) / dt = -L mu
    mu = tau (u - u^n) / dt + lam_reg L u + A u + gamma_lam(u) + Pi(u^n) - g^{n+1}

with ``A = B_eps`` (nonlocal) or ``A = L`` (local), ``L`` the Neumann
``-Delta``. ``Pi`` is explicit: ``Pi_hat`` is concave, so the scheme is a
convex-concave split and the discrete energy decreases for any ``dt``.
``mu`` is eliminated and the remaining system in ``u`` is solved by Newton.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError
from .geometry import Field, Grid, TimeGrid, cosine_mode, lr_sum
from .local_ops import NeumannLaplacian
from .nonlocal_ops import NonlocalOperator, energy_E
from .potentials import YosidaApprox

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    mode: str = "nonlocal"
    tau: float = 0.05
    lambda_reg: float = 0.0
    lambda_yosida: float = 1e-4
    dt: float = 1e-3
    t_final: float = 0.05
    newton_tol: float = 1e-10
    newton_max: int = 50
    snapshots: int = 50

    def __post_init__(self):
        if self.mode not in ("nonlocal", "local"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tau < 0 or self.lambda_reg < 0:
            raise ValueError("tau and lambda_reg must be nonnegative")
        if self.mode == "nonlocal" and not self.tau > 0:
            raise ValueError("the nonlocal equation needs a strictly positive viscosity tau")
        if not self.lambda_yosida > 0:
            raise ValueError("lambda_yosida must be positive")

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.t_final, self.dt)

    @property
    def effective_lambda_reg(self) -> float:
        # the local operator already carries -Delta u
        return 0.0 if self.mode == "local" else self.lambda_reg


@dataclass(frozen=True)
class Forcing:
    """``g(x, t) = offset + amplitude * cos(k pi x_1) * s(t)``.

    ``s = 0`` for kind ``zero``, ``s = 1`` for ``constant`` and the C^1
    smoothstep ``3r^2 - 2r^3`` of ``r = min(t / t_ramp, 1)`` for ``time_ramp``.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    mode: int = 1
    offset: float = 0.0
    t_ramp: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "time_ramp"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")

    def time_factor(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return 1.0
        r = min(max(t / self.t_ramp, 0.0), 1.0)
        return r * r * (3.0 - 2.0 * r)

    def values(self, grid: Grid, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.size)
        s = self.time_factor(t)
        profile = np.cos(self.mode * math.pi * grid.coords(0))
        return s * (self.offset + self.amplitude * profile)


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    mass: float
    E_nl: float
    E_pot: float
    E_reg: float
    E_total: float
    grad_mu_sq: float
    newton_iters: int
    step_residual: float
    # ||(u^{n+1} - u^n) / dt||_H^2, kept for dissipation budgets (not in the CSV)
    rate_sq: float = 0.0

    CSV_FIELDS = ("step", "t", "mass", "E_nl", "E_pot", "E_reg", "E_total",
                  "grad_mu_sq", "newton_iters", "step_residual")

    def row(self):
        return [self.step, *(f"{getattr(self, k):.17g}" for k in self.CSV_FIELDS[1:8]),
                self.newton_iters, f"{self.step_residual:.17g}"]


@dataclass
class Trajectory:
    grid: Grid
    params: SolverParams
    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    u: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    records: list = field(default_factory=list)
    completed: bool = False

    def snapshot(self, step: int, t: float, u: np.ndarray, mu: np.ndarray):
        self.steps.append(step)
        self.times.append(t)
        self.u.append(np.array(u))
        self.mu.append(np.array(mu))

    @property
    def u_fields(self):
        return [Field(self.grid, u) for u in self.u]


class Operators:
    """Everything a step needs, assembled once per run and shared read-only."""

    def __init__(self, grid: Grid, yosida: YosidaApprox, laplacian: NeumannLaplacian | None = None,
                 nonlocal_op: NonlocalOperator | None = None):
        self.grid = grid
        self.yosida = yosida
        self.L = laplacian or NeumannLaplacian(grid)
        self.B = nonlocal_op
        if nonlocal_op is not None and nonlocal_op.grid != grid:
            raise ValueError("nonlocal operator lives on a different grid")
        self._cache = {}

    def A_apply(self, mode: str, u: np.ndarray) -> np.ndarray:
        if mode == "local":
            return self.L.matrix @ u
        if self.B is None:
            raise ValueError("nonlocal mode needs an assembled kernel")
        return self.B.apply(u)

    def E_A(self, mode: str, u: np.ndarray) -> float:
        f = Field(self.grid, u)
        if mode == "local":
            return 0.5 * self.grid.cell_volume * lr_sum(u * (self.L.matrix @ u))
        return energy_E(self.B, f)

    def linear_part(self, params: SolverParams):
        """``C = I + tau L + dt L (lam_reg L + A)``; dense for nonlocal, sparse for local."""
        key = (params.mode, params.tau, params.dt, params.effective_lambda_reg)
        if key not in self._cache:
            L = self.L.matrix
            lam = params.effective_lambda_reg
            N = self.grid.size
            if params.mode == "local":
                M = (1.0 + lam) * L
                C = sp.identity(N, format="csr") + params.tau * L + params.dt * (L @ M)
                self._cache[key] = (C.tocsr(), None)
            else:
                Ld = L.toarray()
                M = self.B.matrix + lam * Ld
                C = np.eye(N) + params.tau * Ld + params.dt * (Ld @ M)
                self._cache[key] = (C, Ld)
        return self._cache[key]


def regularize_initial(u0: Field, lam: float, L: NeumannLaplacian) -> Field:
    """Elliptic regularisation: solve ``v + lam (-Delta) v = u0`` (Neumann)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0:
        return u0
    A = (sp.identity(u0.grid.size, format="csc") + lam * L.matrix).tocsc()
    v = spla.spsolve(A, u0.values)
    res = np.linalg.norm(A @ v - u0.values) * math.sqrt(u0.grid.cell_volume)
    scale = np.linalg.norm(u0.values) * math.sqrt(u0.grid.cell_volume)
    if res > 1e-11 * max(scale, 1e-300) and res > 1e-15:
        raise ConvergenceError("elliptic regularisation solve inaccurate", res)
    return Field(u0.grid, v)


def _h_norm(grid: Grid, v: np.ndarray) -> float:
    return math.sqrt(grid.cell_volume * lr_sum(v * v))


def chemical_potential(u, u_prev, params, ops, g):
    lam = params.effective_lambda_reg
    mu = params.tau * (u - u_prev) / params.dt + ops.A_apply(params.mode, u)
    if lam:
        mu = mu + lam * (ops.L.matrix @ u)
    return mu + ops.yosida.gamma(u) + ops.yosida.potential.pi(u_prev) - g


def _newton(u_prev, params: SolverParams, ops: Operators, g):
    """Newton on ``F(u) = u - u^n + dt L mu(u)``.

    Convergence is measured on ``R = mu - mean(mu) + N((u - u^n)/dt)`` plus the
    mass drift, i.e. ``F`` preconditioned by ``N / dt``: evaluating ``dt L L u``
    in floating point leaves a round-off floor far above ``newton_tol``,
    while ``R`` can be resolved to ~1e-12.
    """
    grid = ops.grid
    L = ops.L.matrix
    lu = ops.L._bordered_lu
    C, Ld = ops.linear_part(params)
    dt = params.dt
    N = grid.size
    hd = grid.cell_volume

    def residual(u):
        mu = chemical_potential(u, u_prev, params, ops, g)
        du = u - u_prev
        drift = hd * lr_sum(du)
        psi = lu.solve(np.append((du - drift) / dt, 0.0))[:N]
        R = mu - hd * lr_sum(mu) + psi + drift / dt
        return du + dt * (L @ mu), mu, _h_norm(grid, R)

    # R carries (u - u^n)/dt, so its round-off floor grows like eps |u| / dt
    floor = 64.0 * np.finfo(float).eps * _h_norm(grid, u_prev) / dt
    tol = max(params.newton_tol, floor)

    u = np.array(u_prev)
    F, mu, r = residual(u)
    history = [r]
    it = 0
    while r > tol:
        if it >= params.newton_max:
            raise ConvergenceError(
                f"Newton failed after {it} iterations", r,
                state={"u_prev": u_prev, "u_iter": u, "g": g},
            )
        dg = ops.yosida.gamma_prime(u)
        if params.mode == "local":
            J = (C + dt * (L @ sp.diags(dg))).tocsc()
            du = -spla.spsolve(J, F)
        else:
            J = C + dt * Ld * dg[None, :]
            du = -sla.solve(J, F, check_finite=False)
        # backtracking guards the nonsmooth (obstacle) case; smooth cases take full steps
        step = 1.0
        for _ in range(30):
            u_try = u + step * du
            F_try, mu_try, r_try = residual(u_try)
            if np.isfinite(r_try) and r_try < r:
                break
            step *= 0.5
        else:
            raise ConvergenceError("Newton line search stalled", r,
                                   state={"u_prev": u_prev, "u_iter": u, "g": g})
        u, F, mu, r = u_try, F_try, mu_try, r_try
        history.append(r)
        it += 1
    if not np.all(np.isfinite(u)):
        raise ConvergenceError("non-finite state", float("nan"), state={"u_prev": u_prev})
    return u, mu, it, history


def diagnostics(step_no, t, u, mu, params, ops, iters=0, residual=0.0, rate_sq=0.0):
    grid = ops.grid
    E_nl = ops.E_A(params.mode, u)
    E_pot = grid.cell_volume * lr_sum(ops.yosida.gamma_hat(u) + ops.yosida.potential.pi_hat(u))
    lam = params.effective_lambda_reg
    E_reg = lam * 0.5 * grid.cell_volume * lr_sum(u * (ops.L.matrix @ u)) if lam else 0.0
    return DiagnosticsRecord(
        step=step_no, t=t,
        mass=grid.cell_volume * lr_sum(u),
        E_nl=E_nl, E_pot=E_pot, E_reg=E_reg, E_total=E_nl + E_pot + E_reg,
        grad_mu_sq=grid.cell_volume * lr_sum(mu * (ops.L.matrix @ mu)),
        newton_iters=iters, step_residual=residual, rate_sq=rate_sq,
    )


def step(u: Field, params: SolverParams, ops: Operators, g_next, step_no: int = 1):
    """Advance one implicit step; returns ``(u_next, mu_next, record)``."""
    g = np.broadcast_to(np.asarray(g_next, dtype=float), (ops.grid.size,))
    u_next, mu, iters, history = _newton(u.values, params, ops, g)
    rate = (u_next - u.values) / params.dt
    rec = diagnostics(step_no, step_no * params.dt, u_next, mu, params, ops, iters, history[-1],
                      ops.grid.cell_volume * lr_sum(rate * rate))
    rec.residual_history = history
    return Field(ops.grid, u_next), Field(ops.grid, mu), rec


def integrate(u0: Field, params: SolverParams, ops: Operators, forcing: Forcing = Forcing(),
              regularize: bool = True,
              on_abort: Callable[[Trajectory, ConvergenceError], None] | None = None) -> Trajectory:
    """Regularise ``u0`` (if ``lambda_reg > 0``) and step to ``t_final``."""
    grid = ops.grid
    lam = params.effective_lambda_reg
    if regularize and lam > 0:
        u0 = regularize_initial(u0, lam, ops.L)
    tg = params.time_grid
    nsteps = tg.steps
    every = max(1, nsteps // max(1, params.snapshots))
    traj = Trajectory(grid, params)

    u = u0.values
    g0 = forcing.values(grid, 0.0)
    mu0 = ops.A_apply(params.mode, u) + ops.yosida.gamma(u) + ops.yosida.potential.pi(u) - g0
    if lam:
        mu0 = mu0 + lam * (ops.L.matrix @ u)
    traj.records.append(diagnostics(0, 0.0, u, mu0, params, ops))
    traj.snapshot(0, 0.0, u, mu0)

    for n in range(1, nsteps + 1):
        t = n * params.dt
        try:
            u_next, mu, rec = step(Field(grid, u), params, ops, forcing.values(grid, t), n)
        except ConvergenceError as exc:
            log.error("step %d failed: %s", n, exc)
            if on_abort is not None:
                on_abort(traj, exc)
            raise
        u = u_next.values
        traj.records.append(rec)
        if n % every == 0 or n == nsteps:
            traj.snapshot(n, t, u, mu.values)
    traj.completed = True
    return traj


def dissipation_budget(traj: Trajectory) -> tuple[float, float]:
    """Return ``(sum dt [|grad mu|^2 + tau |du/dt|^2], E(0) - E(T))``."""
    p = traj.params
    spent = sum(p.dt * (r.grad_mu_sq + p.tau * r.rate_sq) for r in traj.records[1:])
    return spent, traj.records[0].E_total - traj.records[-1].E_total
