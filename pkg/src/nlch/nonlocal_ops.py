"""The nonlocal operator ``B_eps``, its energy, the ``V_eps`` norm and resolvent.

On the grid ``B_eps = diag(row_sums) - K``, the quadrature of
``(K_eps * 1) phi - K_eps * phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from . import _backend
from .errors import ConvergenceError, GridMismatchError
from .geometry import Field, inner_h, norm_h
from .kernels import KernelMatrix


@dataclass(frozen=True, eq=False)
class NonlocalOperator:
    kernel: KernelMatrix

    @property
    def grid(self):
        return self.kernel.grid

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense ``diag(row_sums) - K``."""
        B = -np.array(self.kernel.entries)
        B[np.diag_indices_from(B)] += self.kernel.row_sums
        return B

    def apply(self, values: np.ndarray) -> np.ndarray:
        K = self.kernel
        return K.row_sums * values - K.entries @ values


def _check(op: NonlocalOperator, phi: Field):
    if phi.grid != op.grid:
        raise GridMismatchError(f"{phi.grid} vs {op.grid}")


def apply_B(op: NonlocalOperator, phi: Field) -> Field:
    _check(op, phi)
    return Field(op.grid, op.apply(phi.values))


def energy_E(op: NonlocalOperator, phi: Field) -> float:
    """``1/4 sum_{i,j} K_ij (phi_i - phi_j)^2 h^d``, by direct pair summation."""
    _check(op, phi)
    s = _backend.kernels.pair_energy_sum(op.kernel.entries, phi.values)
    return 0.25 * op.grid.cell_volume * s


def norm_Veps(op: NonlocalOperator, phi: Field) -> float:
    return math.sqrt(inner_h(phi, phi) + 2.0 * energy_E(op, phi))


def resolvent_B(op: NonlocalOperator, delta: float, phi: Field) -> Field:
    """Solve ``(I + delta B) phi_delta = phi`` (SPD, Cholesky)."""
    _check(op, phi)
    if not delta > 0:
        raise ValueError("delta must be positive")
    A = delta * op.matrix
    A[np.diag_indices_from(A)] += 1.0
    try:
        x = sla.cho_solve(sla.cho_factor(A), phi.values)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"Cholesky breakdown: {exc}") from exc
    out = Field(op.grid, x)
    res = Field(op.grid, x + delta * op.apply(x) - phi.values)
    r = norm_h(res)
    if r > 1e-11 * max(norm_h(phi), 1e-300) and r > 1e-15:
        raise ConvergenceError("resolvent solve inaccurate", r)
    return out
