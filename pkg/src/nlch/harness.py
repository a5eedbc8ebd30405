"""Convergence experiments: energies, Poincare ratios, lambda/eps sweeps, stability.

Each experiment returns a :class:`ConvergenceReport` whose rows line up with
the swept values. Verdicts are monotonicity or boundedness checks only;
log2 error ratios are reported for information.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .config import RunConfig
from .errors import ConvergenceError, GridMismatchError, ResolutionError
from .geometry import Field, Grid, inner_h, lr_sum, mean
from .kernels import MAX_DENSE_CELLS, assemble_kernel, make_mollifier
from .local_ops import norm_Vstar
from .nonlocal_ops import NonlocalOperator, energy_E
from .runner import build_operators, initial_field, manifest_text, run
from .stepper import Trajectory

log = logging.getLogger(__name__)

NORMS = ("C0_H", "C0_Vstar", "L2_H")
PARAMETERS = ("epsilon", "lambda", "tau")
TAU_RULES = ("fixed", "eps")
POINCARE_CONSTANT = 1.0 / math.pi**2  # unit box, any d: first Neumann eigenvalue is pi^2


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    parameter: str
    values: tuple
    norm: str = "C0_H"

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown comparison norm {self.norm!r}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 3:
            raise ValueError("a sweep needs at least three values")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"sweep values must be strictly decreasing, got {vals}")
        if self.parameter == "epsilon":
            h = self.base.grid.h
            bad = [e for e in vals if e < 2 * h]
            if bad:
                raise ResolutionError(f"epsilon values {bad} below 2h={2 * h}")


@dataclass
class ConvergenceReport:
    experiment: str
    parameter: str
    columns: tuple
    rows: list
    passed: bool
    rates: list = field(default_factory=list)
    stability_constant: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def write_csv(self, dest) -> None:
        """Write to a path or an open text stream."""
        if hasattr(dest, "write"):
            self._write_rows(dest)
            return
        with open(dest, "w", newline="") as fh:
            self._write_rows(fh)

    def _write_rows(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])

    def summary(self) -> dict:
        out = {"verdict": self.verdict, "experiment": self.experiment}
        if self.rates:
            out["rates"] = ",".join(_fmt(r) for r in self.rates)
        if self.stability_constant is not None:
            out["stability_constant"] = _fmt(self.stability_constant)
        out.update({k: _fmt(v) for k, v in self.notes.items()})
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def log2_rates(errors: Sequence[float]) -> list:
    return [math.log2(a / b) if a > 0 and b > 0 else float("nan") for a, b in zip(errors, errors[1:])]


def write_report(out_dir, report: ConvergenceReport, cfg: RunConfig, command: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    (out / "manifest.txt").write_text(manifest_text(cfg, command, report.summary()))
    return out


# ----------------------------------------------------------------- analytic fields

@dataclass(frozen=True)
class AnalyticField:
    """A smooth field on the unit box with its gradient, both vectorised."""

    name: str
    dim: int
    value: Callable = field(repr=False)
    grad: Callable = field(repr=False)

    def sample(self, grid: Grid) -> np.ndarray:
        if grid.dim != self.dim:
            raise ValueError(f"{self.dim}-D field sampled on a {grid.dim}-D grid")
        c = grid.centers
        return np.asarray(self.value(*(c[:, k] for k in range(self.dim))), dtype=float)


def cosine_field(dim: int, modes: Sequence[int] = (1,), amplitude: float = 1.0) -> AnalyticField:
    """``amplitude * prod_k cos(pi m_k x_k)`` (missing modes default to the last one)."""
    ms = list(modes) + [modes[-1]] * (dim - len(modes))
    ms = [int(m) for m in ms[:dim]]
    w = [math.pi * m for m in ms]

    def value(*x):
        out = amplitude
        for wk, xk in zip(w, x):
            out = out * np.cos(wk * xk)
        return out

    def grad(*x):
        g = []
        for j in range(dim):
            comp = amplitude
            for k, (wk, xk) in enumerate(zip(w, x)):
                comp = comp * (-wk * np.sin(wk * xk) if k == j else np.cos(wk * xk))
            g.append(comp)
        return g

    return AnalyticField(f"cos{tuple(ms)}", dim, value, grad)


def constant_field(dim: int, value: float = 1.0) -> AnalyticField:
    return AnalyticField(
        "constant", dim,
        lambda *x: np.full_like(np.asarray(x[0], dtype=float), value),
        lambda *x: [np.zeros_like(np.asarray(x[0], dtype=float)) for _ in range(dim)],
    )


def random_smooth_field(dim: int, rng: np.random.Generator, max_mode: int = 3) -> AnalyticField:
    """Random combination of Neumann cosine modes with decaying coefficients."""
    idx = [k for k in np.ndindex(*([max_mode + 1] * dim)) if any(k)]
    coef = rng.standard_normal(len(idx)) / np.array([1.0 + sum(m * m for m in k) for k in idx])
    modes = [(c, [math.pi * m for m in k]) for c, k in zip(coef, idx)]

    def value(*x):
        out = 0.0
        for c, w in modes:
            term = c
            for wk, xk in zip(w, x):
                term = term * np.cos(wk * xk)
            out = out + term
        return out + 0.0 * x[0]

    def grad(*x):
        g = [0.0 * x[0] for _ in range(dim)]
        for c, w in modes:
            for j in range(dim):
                term = c
                for k, (wk, xk) in enumerate(zip(w, x)):
                    term = term * (-wk * np.sin(wk * xk) if k == j else np.cos(wk * xk))
                g[j] = g[j] + term
        return g

    return AnalyticField("random", dim, value, grad)


def dirichlet_target(phi: AnalyticField) -> float:
    """``1/2 int |grad phi|^2`` over the unit box by adaptive quadrature."""
    opts = dict(epsabs=1e-13, epsrel=1e-12)

    def dens(*x):
        return 0.5 * float(sum(np.asarray(g) ** 2 for g in phi.grad(*x)))

    if phi.dim == 1:
        val, _ = integrate.quad(dens, 0.0, 1.0, limit=200, **opts)
    elif phi.dim == 2:
        val, _ = integrate.dblquad(lambda y, x: dens(x, y), 0.0, 1.0, 0.0, 1.0, **opts)
    else:
        raise ValueError(f"unsupported dimension {phi.dim}")
    return val


# ------------------------------------------------------------------ gamma_check

def _grid_for(dim: int, eps: float, cells_per_eps: float) -> Grid:
    if cells_per_eps < 4:
        raise ResolutionError(f"cells_per_eps={cells_per_eps} violates h <= eps/4")
    n = max(8, math.ceil(cells_per_eps / eps - 1e-9))
    if n**dim > MAX_DENSE_CELLS:
        raise ResolutionError(f"eps={eps} needs {n}^{dim} cells (> {MAX_DENSE_CELLS})")
    return Grid(dim, n)


DEFAULT_CELLS_PER_EPS = {1: 16.0, 2: 4.0}


def gamma_check(phi: AnalyticField, eps_list: Sequence[float], family: str = "bump",
                cells_per_eps: float | None = None, quadrature: str = "moment",
                rel_tol: float | None = None, target: float | None = None) -> ConvergenceReport:
    """Compare ``E_eps(phi)`` with the Dirichlet energy along a refining schedule.

    The grid for each eps has ``ceil(cells_per_eps / eps)`` cells per side.
    PASS if the error at the smallest eps is the smallest, and (with
    ``rel_tol``) its relative error is at most ``rel_tol``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    cpe = cells_per_eps or DEFAULT_CELLS_PER_EPS[phi.dim]
    tgt = dirichlet_target(phi) if target is None else float(target)
    rows = []
    for eps in eps_list:
        grid = _grid_for(phi.dim, eps, cpe)
        op = NonlocalOperator(assemble_kernel(grid, make_mollifier(family, eps, phi.dim), quadrature))
        E = energy_E(op, Field(grid, phi.sample(grid)))
        err = abs(E - tgt)
        rows.append({"epsilon": eps, "n": grid.n, "h": grid.h, "energy": E, "target": tgt,
                     "abs_error": err, "rel_error": err / abs(tgt) if tgt else err})
    errs = [r["abs_error"] for r in rows]
    ok = errs[-1] <= min(errs)
    if rel_tol is not None:
        ok = ok and rows[-1]["rel_error"] <= rel_tol
    return ConvergenceReport(
        "gamma_check", "epsilon",
        ("epsilon", "n", "h", "energy", "target", "abs_error", "rel_error"),
        rows, ok, log2_rates(errs),
        notes={"field": phi.name, "family": family, "cells_per_eps": cpe, "quadrature": quadrature},
    )


# --------------------------------------------------------------- poincare_check

def poincare_check(dim: int, eps_list: Sequence[float], samples: int = 20, seed: int = 0,
                   family: str = "bump", cells_per_eps: float | None = None,
                   quadrature: str = "moment", max_mode: int = 3,
                   fields: Sequence[AnalyticField] | None = None) -> ConvergenceReport:
    """Ratio ``||phi - mean||^2 / (2 E_eps(phi))`` over seeded smooth fields.

    Its continuum limit is bounded by the Poincare constant ``1/pi^2``; PASS
    if the largest ratio stays below ten times that for every eps.
    """
    rng = np.random.default_rng(seed)
    pool = list(fields) if fields is not None else [random_smooth_field(dim, rng, max_mode) for _ in range(samples)]
    cpe = cells_per_eps or DEFAULT_CELLS_PER_EPS[dim]
    bound = 10.0 * POINCARE_CONSTANT
    rows, per_field = [], []
    for eps in eps_list:
        grid = _grid_for(dim, float(eps), cpe)
        op = NonlocalOperator(assemble_kernel(grid, make_mollifier(family, eps, dim), quadrature))
        ratios = []
        for phi in pool:
            f = Field(grid, phi.sample(grid))
            f0 = f.values - mean(f)
            num = grid.cell_volume * lr_sum(f0 * f0)
            den = 2.0 * energy_E(op, f)
            ratios.append(num / den if den > 1e-14 and num > 1e-14 else float("nan"))
        r = np.array(ratios)
        used = r[np.isfinite(r)]
        per_field.append(r)
        rows.append({
            "epsilon": float(eps), "n": grid.n, "samples": int(used.size),
            "excluded": int(r.size - used.size),
            "max_ratio": float(used.max()) if used.size else float("nan"),
            "min_ratio": float(used.min()) if used.size else float("nan"),
            "mean_ratio": float(used.mean()) if used.size else float("nan"),
            "bound": bound,
        })
    spread = np.array(per_field)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # fields excluded at every eps
        variation = np.nanmax(spread, axis=0) / np.nanmin(spread, axis=0) - 1.0
    ok = all(np.isfinite(r["max_ratio"]) and r["max_ratio"] <= bound for r in rows)
    return ConvergenceReport(
        "poincare_check", "epsilon",
        ("epsilon", "n", "samples", "excluded", "max_ratio", "min_ratio", "mean_ratio", "bound"),
        rows, ok, stability_constant=max(r["max_ratio"] for r in rows),
        notes={"max_relative_variation": float(np.nanmax(variation)) if np.isfinite(variation).any() else float("nan"),
               "family": family, "seed": seed},
    )


# ----------------------------------------------------------------- trajectories

def every_step(cfg: RunConfig) -> RunConfig:
    """Snapshot every step so that sup norms in time are exact on the time grid."""
    return cfg.with_solver(snapshots=cfg.solver.time_grid.steps)


def _check_schedules(a: Trajectory, b: Trajectory) -> None:
    if a.steps != b.steps or a.grid != b.grid:
        raise GridMismatchError("trajectories have mismatched snapshot schedules or grids")


def sup_h_distance(a: Trajectory, b: Trajectory) -> float:
    _check_schedules(a, b)
    g = a.grid
    return max(math.sqrt(g.cell_volume * lr_sum((x - y) ** 2)) for x, y in zip(a.u, b.u))


def l2h_distance(a: Trajectory, b: Trajectory, which: str = "u") -> float:
    """``(sum over snapshots after t=0 of dt |a - b|_H^2)^(1/2)``, for full schedules."""
    _check_schedules(a, b)
    g, dt = a.grid, a.params.dt
    xs, ys = getattr(a, which)[1:], getattr(b, which)[1:]
    return math.sqrt(sum(dt * g.cell_volume * lr_sum((x - y) ** 2) for x, y in zip(xs, ys)))


def sup_vstar_distance(a: Trajectory, b: Trajectory, ops) -> float:
    _check_schedules(a, b)
    return max(norm_Vstar(ops.L, Field(a.grid, x - y)) for x, y in zip(a.u, b.u))


def distance(a: Trajectory, b: Trajectory, norm: str, ops=None) -> float:
    if norm == "C0_H":
        return sup_h_distance(a, b)
    if norm == "L2_H":
        return l2h_distance(a, b)
    if norm == "C0_Vstar":
        return sup_vstar_distance(a, b, ops)
    raise ValueError(f"unknown norm {norm!r}")


# ----------------------------------------------------------------- lambda_sweep

def lambda_sweep(cfg: RunConfig, lambdas: Sequence[float], norm: str = "C0_H",
                 couple_reg: bool = True) -> ConvergenceReport:
    """Run the scheme for each lambda and compare neighbours.

    With ``couple_reg`` the elliptic regularisation follows lambda too;
    otherwise it keeps the configured value and only the Yosida parameter
    moves. PASS if the successive distances are strictly decreasing. A failed run
    is reported with its lambda and makes the verdict FAIL.
    """
    lambdas = [float(x) for x in lambdas]
    if any(b > a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda list must be non-increasing")
    base = every_step(cfg)
    trajs, rows, failed = [], [], None
    for lam in lambdas:
        lam_reg = lam if couple_reg else base.solver.lambda_reg
        c = base.with_solver(lambda_yosida=lam, lambda_reg=lam_reg)
        row = {"lambda": lam, "status": "ok"}
        try:
            tr = run(c)
        except ConvergenceError as exc:
            row["status"] = f"failed: {exc}"
            failed = failed or lam
            rows.append(row)
            trajs.append(None)
            continue
        umax = max(float(np.max(np.abs(u))) for u in tr.u)
        row["max_abs_u"] = umax
        if cfg.potential.domain_bound is not None:
            row["band_excess"] = max(0.0, umax - cfg.potential.domain_bound)
        trajs.append(tr)
        rows.append(row)
    ops = build_operators(base) if norm == "C0_Vstar" else None
    diffs = []
    for k in range(len(lambdas) - 1):
        a, b = trajs[k], trajs[k + 1]
        d = distance(a, b, norm, ops) if a is not None and b is not None else float("nan")
        rows[k]["diff_to_next"] = d
        diffs.append(d)
    ok = failed is None and all(np.isfinite(diffs)) and strictly_decreasing(diffs)
    notes = {"norm": norm, "potential": cfg.potential.kind, "couple_reg": couple_reg}
    if failed is not None:
        notes["failed_lambda"] = failed
    return ConvergenceReport(
        "lambda_sweep", "lambda",
        ("lambda", "diff_to_next", "max_abs_u", "band_excess", "status"),
        rows, ok, log2_rates(diffs), notes=notes,
    )


# -------------------------------------------------------------------- eps_sweep

def eps_sweep(cfg: RunConfig, eps_list: Sequence[float], tau_rule: str = "fixed",
              lambda_small: float = 1e-5, self_test: bool = False, norm: str = "C0_H") -> ConvergenceReport:
    """Nonlocal runs for each eps against one local reference on the same grid.

    ``tau_rule="fixed"`` keeps ``tau`` from the config for every run and the
    reference. ``tau_rule="eps"`` sets ``tau = eps`` for the nonlocal runs
    and ``tau = 0`` for the reference; it also requires the viscous term
    ``||tau dU/dt||_{L2(H)}`` to decrease. With ``self_test`` the nonlocal
    runs are replaced by local ones, which must reproduce the reference.
    """
    if tau_rule not in TAU_RULES:
        raise ValueError(f"unknown tau rule {tau_rule!r}")
    spec = SweepSpec(cfg, "epsilon", tuple(eps_list), norm)
    base = every_step(cfg).with_solver(lambda_yosida=lambda_small, lambda_reg=lambda_small)
    ref_tau = base.solver.tau if tau_rule == "fixed" else 0.0
    ref_cfg = base.with_solver(mode="local", tau=ref_tau)
    ref = run(ref_cfg)
    ops_ref = build_operators(ref_cfg) if norm == "C0_Vstar" else None

    rows = []
    for eps in spec.values:
        tau = base.solver.tau if tau_rule == "fixed" else eps
        c = base.replace(epsilon=eps).with_solver(tau=tau)
        if self_test:
            c = ref_cfg
        tr = run(c)
        visc = math.sqrt(sum(tr.params.dt * tr.params.tau**2 * r.rate_sq for r in tr.records[1:]))
        rows.append({
            "epsilon": eps, "tau": tr.params.tau,
            "error": distance(tr, ref, norm, ops_ref),
            "mu_distance_L2H": l2h_distance(tr, ref, "mu"),
            "viscous_L2H": visc,
        })
    errs = [r["error"] for r in rows]
    if self_test:
        ok = max(errs) <= 1e-10
    else:
        ok = strictly_decreasing(errs)
        if tau_rule == "eps":
            ok = ok and strictly_decreasing([r["viscous_L2H"] for r in rows])
    return ConvergenceReport(
        "eps_sweep", "epsilon",
        ("epsilon", "tau", "error", "mu_distance_L2H", "viscous_L2H"),
        rows, ok, log2_rates(errs),
        notes={"norm": norm, "tau_rule": tau_rule, "self_test": self_test,
               "reference_tau": ref_tau, "lambda": lambda_small},
    )


# -------------------------------------------------------------- stability_check

def perturbation_direction(grid: Grid, seed: int = 0, max_mode: int = 3) -> np.ndarray:
    """Seeded smooth zero-mean direction with unit H norm."""
    phi = random_smooth_field(grid.dim, np.random.default_rng(seed), max_mode)
    v = phi.sample(grid)
    v = v - lr_sum(v) / v.size
    return v / math.sqrt(grid.cell_volume * lr_sum(v * v))


def _paired_lhs(cfg: RunConfig, ops, t1: Trajectory, t2: Trajectory) -> tuple[float, float]:
    _check_schedules(t1, t2)
    grid, p = t1.grid, t1.params
    d0 = t1.u[0] - t2.u[0]
    rhs = norm_Vstar(ops.L, Field(grid, d0)) ** 2 + p.tau * inner_h(Field(grid, d0), Field(grid, d0))
    vs = max(norm_Vstar(ops.L, Field(grid, a - b)) ** 2 for a, b in zip(t1.u, t2.u))
    hh = max(grid.cell_volume * lr_sum((a - b) ** 2) for a, b in zip(t1.u, t2.u))
    e_int = sum(p.dt * ops.E_A(p.mode, a - b) for a, b in zip(t1.u[1:], t2.u[1:]))
    return vs + p.tau * hh + e_int, rhs


def stability_check(cfg: RunConfig, sizes: Sequence[float] = (1e-2, 1e-3, 1e-4), seed: int = 0,
                    direction: np.ndarray | None = None, spread: float = 10.0) -> ConvergenceReport:
    """Paired runs from ``u0`` and ``u0 + delta * p`` with a zero-mean direction ``p``.

    Reports ``LHS / RHS`` per size, where the left side collects the sup-in-time
    V* and H distances plus the time integral of the energy of the difference,
    and the right side the same norms of the initial difference. PASS if the
    nonzero ratios are within ``spread`` of each other.
    """
    base = every_step(cfg)
    grid = base.grid
    p = perturbation_direction(grid, seed) if direction is None else np.asarray(direction, dtype=float)
    if abs(lr_sum(p) / p.size) > 1e-12:
        raise ValueError("perturbation must have zero mean")
    ops = build_operators(base)
    u0 = initial_field(base)
    t1 = run(base, ops=ops, u0=u0)
    rows = []
    for delta in sizes:
        row = {"delta": float(delta)}
        if delta == 0 or not np.any(p):
            row.update(lhs=0.0, rhs=0.0, ratio=None)
            rows.append(row)
            continue
        u0b = u0.with_values(u0.values + delta * p)
        bound = base.potential.domain_bound
        if bound is not None and np.max(np.abs(u0b.values)) >= bound:
            raise ValueError(f"perturbed datum leaves the potential domain at delta={delta}")
        t2 = run(base, ops=ops, u0=u0b)
        lhs, rhs = _paired_lhs(base, ops, t1, t2)
        row.update(lhs=lhs, rhs=rhs, ratio=lhs / rhs)
        rows.append(row)
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    ok = bool(ratios) and max(ratios) <= spread * min(ratios)
    return ConvergenceReport(
        "stability_check", "delta", ("delta", "lhs", "rhs", "ratio"), rows, ok,
        stability_constant=max(ratios) if ratios else None,
        notes={"spread": (max(ratios) / min(ratios)) if ratios else float("nan"), "seed": seed},
    )


def stability_scaling(cfg: RunConfig, delta: float, seed: int = 0) -> float:
    """``LHS(delta / 2) / LHS(delta)``; about 1/4 for small ``delta``."""
    rep = stability_check(cfg, (delta, delta / 2), seed)
    a, b = rep.rows
    return b["lhs"] / a["lhs"]
