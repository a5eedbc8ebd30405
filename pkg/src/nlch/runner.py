"""Assemble operators from a config, run a simulation, write its outputs."""
from __future__ import annotations

import csv
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .config import RunConfig
from .errors import ConvergenceError
from .geometry import Field, Grid, make_field, write_field_csv
from .kernels import assemble_kernel, make_mollifier
from .local_ops import NeumannLaplacian
from .nonlocal_ops import NonlocalOperator
from .potentials import YosidaApprox
from .stepper import DiagnosticsRecord, Operators, Trajectory, integrate


@lru_cache(maxsize=8)
def _laplacian(grid: Grid) -> NeumannLaplacian:
    return NeumannLaplacian(grid)


@lru_cache(maxsize=4)
def _nonlocal(grid: Grid, family: str, epsilon: float, quadrature: str = "moment") -> NonlocalOperator:
    return NonlocalOperator(assemble_kernel(grid, make_mollifier(family, epsilon, grid.dim), quadrature))


def build_operators(cfg: RunConfig) -> Operators:
    grid = cfg.grid
    B = _nonlocal(grid, cfg.family, cfg.epsilon, cfg.quadrature) if cfg.solver.mode == "nonlocal" else None
    return Operators(grid, YosidaApprox(cfg.potential, cfg.solver.lambda_yosida), _laplacian(grid), B)


def initial_field(cfg: RunConfig) -> Field:
    return make_field(cfg.grid, cfg.init, bound=cfg.potential.domain_bound)


def manifest_text(cfg: RunConfig, command: str, extra: dict | None = None) -> str:
    """Run metadata followed by the resolved config; valid input for ``parse_config``."""
    lines = ["[manifest]", f"tool = nlch {__version__}", f"command = {command}", f"backend = {_backend.NAME}"]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    return "\n".join(lines) + "\n\n" + cfg.to_ini()


def write_manifest(out: Path, cfg: RunConfig, command: str, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(manifest_text(cfg, command, extra))


def write_trajectory(out: Path, traj: Trajectory) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.CSV_FIELDS)
        for rec in traj.records:
            w.writerow(rec.row())
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    for k, (n, u) in enumerate(zip(traj.steps, traj.u)):
        write_field_csv(snap / f"u_{n:06d}.csv", Field(traj.grid, u))


def run(cfg: RunConfig, out_dir=None, ops: Operators | None = None, u0: Field | None = None) -> Trajectory:
    """Regularise the initial datum and integrate to ``t_final``.

    With ``out_dir`` the diagnostics, snapshots and manifest are written;
    on a failed step the partial trajectory and the failing state are
    written before the error propagates.
    """
    cfg.validate()
    ops = ops or build_operators(cfg)
    u0 = u0 if u0 is not None else initial_field(cfg)
    out = Path(out_dir) if out_dir is not None else None

    def on_abort(traj: Trajectory, exc: ConvergenceError):
        if out is None:
            return
        write_trajectory(out, traj)
        np.savez(out / "abort_state.npz", **{k: np.asarray(v) for k, v in exc.state.items()})
        write_manifest(out, cfg, "run", {"status": f"aborted: {exc}"})

    traj = integrate(u0, cfg.solver, ops, cfg.forcing, on_abort=on_abort)
    if out is not None:
        write_trajectory(out, traj)
        write_manifest(out, cfg, "run", {"status": "completed"})
    return traj
