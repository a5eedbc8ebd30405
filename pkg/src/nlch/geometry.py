"""Uniform cell-centred grids on the unit box, grid functions and quadrature.

All reductions go through :func:`lr_sum`, a strictly left-to-right
accumulation, so results are reproducible bit-for-bit and ``inner_h`` is
exactly symmetric.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, GridMismatchError


def lr_sum(values: np.ndarray) -> float:
    """Sum a 1-D array strictly left to right (no pairwise reordering)."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


@dataclass(frozen=True)
class Grid:
    """Cell-centred uniform grid on ``(0, 1)^dim``.

    Cells are numbered in C order over ``(ix, iy)``, so in 2-D the flat
    index is ``ix * n + iy``.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 4:
            raise ValueError(f"need at least 4 cells per dimension, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(size, dim)``."""
        if self.dim == 1:
            return self.axis[:, None].copy()
        gx, gy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def coords(self, k: int) -> np.ndarray:
        """Coordinate ``x_{k+1}`` of every cell centre."""
        return self.centers[:, k]


@dataclass(frozen=True, eq=False)
class Field:
    """One real value per cell of ``grid``; immutable once built."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field contains NaN or Inf")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    dt: float

    def __post_init__(self):
        if not (self.t_final > 0 and self.dt > 0):
            raise ValueError("t_final and dt must be positive")

    @property
    def steps(self) -> int:
        # tolerate round-off in T/dt so that e.g. 0.05/1e-3 gives 50, not 51
        return max(1, math.ceil(self.t_final / self.dt - 1e-9))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"{a.grid} vs {b.grid}")


def inner_h(a: Field, b: Field) -> float:
    """Discrete L2(Omega) inner product ``h^d sum_i a_i b_i``."""
    _check_same_grid(a, b)
    return a.grid.cell_volume * lr_sum(a.values * b.values)


def norm_h(a: Field) -> float:
    return math.sqrt(inner_h(a, a))


def mean(a: Field) -> float:
    """Mean value over the unit box (|Omega| = 1)."""
    return a.grid.cell_volume * lr_sum(a.values)


@dataclass(frozen=True)
class InitSpec:
    """Recipe for an initial field.

    kind ``constant``: every cell equals ``mean``.
    kind ``cosine``: ``mean + sum_k a_k prod_d cos(k pi x_d)`` over ``modes``.
    kind ``random``: uniform on ``[mean - amplitude, mean + amplitude]``
    drawn with ``seed``, then shifted so the discrete mean is ``mean``.
    """

    kind: str = "constant"
    mean: float = 0.0
    amplitude: float = 0.0
    modes: Sequence[int] = (1,)
    amplitudes: Sequence[float] | None = None
    seed: int = 0


def cosine_mode(grid: Grid, k: int) -> np.ndarray:
    out = np.ones(grid.size)
    for d in range(grid.dim):
        out = out * np.cos(k * math.pi * grid.coords(d))
    return out


def make_field(grid: Grid, init: InitSpec, bound: float | None = None) -> Field:
    """Build an initial field; ``bound`` enforces ``|u| < bound`` if given.

    Pass ``bound=1`` for the logarithmic and double-obstacle potentials.
    """
    kind = init.kind
    if kind == "constant":
        values = np.full(grid.size, float(init.mean))
    elif kind == "cosine":
        amps = init.amplitudes if init.amplitudes is not None else [init.amplitude] * len(init.modes)
        if len(amps) != len(init.modes):
            raise ValueError("modes and amplitudes differ in length")
        values = np.full(grid.size, float(init.mean))
        for k, a in zip(init.modes, amps):
            values = values + a * cosine_mode(grid, int(k))
    elif kind == "random":
        rng = np.random.default_rng(init.seed)
        values = rng.uniform(init.mean - init.amplitude, init.mean + init.amplitude, grid.size)
        values = values - grid.cell_volume * lr_sum(values) + init.mean
    else:
        raise ValueError(f"unknown init kind {kind!r}")
    if bound is not None:
        worst = float(np.max(np.abs(values)))
        if worst >= bound:
            raise DomainError(f"initial data reach |u| = {worst:.6g}, must stay below {bound}")
    return Field(grid, values)


def write_field_csv(path, f: Field) -> None:
    """Snapshot format: ``index,x[,y],value`` with 17 significant digits."""
    grid = f.grid
    header = ["index", "x", "y"][: 1 + grid.dim] + ["value"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, (c, v) in enumerate(zip(grid.centers, f.values)):
            w.writerow([i, *(f"{x:.17g}" for x in c), f"{v:.17g}"])


def read_field_csv(path, grid: Grid) -> Field:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Field(grid, [float(r["value"]) for r in rows])
