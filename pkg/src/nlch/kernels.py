"""Radial mollifier families and dense quadrature of the singular kernel.

The kernel is ``K_eps(x, y) = rho_eps(|x - y|) / |x - y|^2`` with
``rho_eps(r) = A_d eps^-d rho_hat(r / eps)``, normalised so that
``int_0^inf rho_eps(r) r^(d-1) dr = 2 / C_d``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _backend
from .errors import ConvergenceError, ResolutionError
from .geometry import Grid

FAMILIES = {"indicator": 0, "bump": 1}
MAX_DENSE_CELLS = 8192
# Lattice points within this relative distance of the indicator's jump count
# as outside, so commensurate grids (eps a multiple of h) do not depend on
# round-off in the centre coordinates.
EDGE_TOL = 1e-9


def c_d(dim: int) -> float:
    """``C_d = int_{S^(d-1)} |e_1 . sigma|^2``, i.e. ``|S^(d-1)| / d``."""
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    sphere_area = 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    return sphere_area / dim


def profile(family: str, s):
    """Unscaled profile ``rho_hat`` on ``s >= 0`` (both families vanish for s >= 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    if family == "indicator":
        out[s < 1.0 - EDGE_TOL] = 1.0
    elif family == "bump":
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    else:
        raise ValueError(f"unknown mollifier family {family!r}")
    return out


@lru_cache(maxsize=None)
def _profile_moment(family: str, dim: int) -> float:
    """``int_0^1 rho_hat(s) s^(d-1) ds``."""
    if family == "indicator":
        return 1.0 / dim
    val, err = integrate.quad(
        lambda s: math.exp(-1.0 / (1.0 - s * s)) * s ** (dim - 1),
        0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return val


@dataclass(frozen=True)
class MollifierSpec:
    family: str
    epsilon: float
    dim: int
    amplitude: float = field(init=False)
    c_d: float = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mollifier family {self.family!r}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        cd = c_d(self.dim)
        object.__setattr__(self, "c_d", cd)
        object.__setattr__(self, "amplitude", (2.0 / cd) / _profile_moment(self.family, self.dim))

    @property
    def support(self) -> float:
        return self.epsilon

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        return self.amplitude * self.epsilon ** (-self.dim) * profile(self.family, r / self.epsilon)


def make_mollifier(family: str, epsilon: float, dim: int) -> MollifierSpec:
    return MollifierSpec(family, float(epsilon), int(dim))


@dataclass(frozen=True)
class MollifierReport:
    family: str
    epsilon: float
    normalization: float
    normalization_error: float
    tail_mass: float


def validate_mollifier(m: MollifierSpec, delta: float) -> MollifierReport:
    """Check normalisation and tail mass by adaptive quadrature of ``rho_eps``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = m.dim

    def integrand(r):
        return float(m(r)) * r ** (d - 1)

    def quad(a, b):
        val, err, info = integrate.quad(
            integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=400, full_output=1
        )[:3]
        if err > 1e-10 * max(abs(val), 1e-300) and err > 1e-14:
            raise ConvergenceError("mollifier quadrature did not converge", err)
        return val

    total = quad(0.0, m.support)
    target = 2.0 / m.c_d
    tail = quad(delta, m.support) if delta < m.support else 0.0
    return MollifierReport(m.family, m.epsilon, total, abs(total - target) / target, tail)


def lattice_moment(m: MollifierSpec, h: float) -> float:
    """``sum over z in h Z^d, z != 0, of rho_eps(|z|) h^d``.

    This is the discrete counterpart of ``int_{R^d} rho_eps(|z|) dz = 2d``
    (the normalisation condition times ``|S^(d-1)|``) seen by an interior
    cell, i.e. ``sum_j K_ij |x_i - x_j|^2`` away from the boundary.
    """
    kmax = int(math.ceil(m.support / h))
    k = np.arange(-kmax, kmax + 1, dtype=float) * h
    if m.dim == 1:
        r = np.abs(k)
    else:
        kx, ky = np.meshgrid(k, k, indexing="ij")
        r = np.sqrt(kx * kx + ky * ky).ravel()
    r = r[r > 0]
    return float(np.sum(m(r))) * h**m.dim


QUADRATURES = ("moment", "punctured")


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense kernel quadrature: ``K_ij = s * rho_eps(r_ij) / r_ij^2 * h^d``, ``K_ii = 0``.

    ``scale`` (``s``) is 1 for the plain punctured midpoint rule. With the
    ``moment`` quadrature it is ``2d / lattice_moment``, which removes the
    O(h/eps) consistency error of the punctured rule.
    """

    grid: Grid
    mollifier: MollifierSpec
    entries: np.ndarray = field(repr=False)
    row_sums: np.ndarray = field(repr=False)
    scale: float = 1.0
    quadrature: str = "punctured"

    def __post_init__(self):
        self.entries.flags.writeable = False
        self.row_sums.flags.writeable = False


def assemble_kernel(grid: Grid, m: MollifierSpec, quadrature: str = "moment", backend=None) -> KernelMatrix:
    """Assemble the dense kernel on ``grid``.

    Requires ``epsilon >= 2h`` (warns below ``3h``) and at most
    ``MAX_DENSE_CELLS`` cells.
    """
    if m.dim != grid.dim:
        raise ValueError(f"mollifier is {m.dim}-D, grid is {grid.dim}-D")
    if quadrature not in QUADRATURES:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if m.epsilon < 2 * grid.h:
        raise ResolutionError(f"epsilon={m.epsilon} < 2h={2 * grid.h}: kernel not resolved")
    if m.epsilon < 3 * grid.h:
        warnings.warn(f"epsilon={m.epsilon} is below 3h; kernel quadrature is coarse", stacklevel=2)
    if grid.size > MAX_DENSE_CELLS:
        raise ResolutionError(f"{grid.size} cells exceeds dense limit {MAX_DENSE_CELLS}")
    scale = 1.0
    if quadrature == "moment":
        scale = 2.0 * grid.dim / lattice_moment(m, grid.h)
    impl = backend or _backend.kernels
    K, rs = impl.assemble_dense(
        grid.centers, FAMILIES[m.family], m.epsilon, m.amplitude * scale, grid.cell_volume
    )
    return KernelMatrix(grid, m, K, rs, scale, quadrature)
