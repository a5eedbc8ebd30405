"""Neumann Laplacian on the cell-centred grid and the operators built on it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, GridMismatchError
from .geometry import Field, Grid, inner_h, lr_sum, mean


def _neumann_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0  # reflected ghost cell cancels the boundary flux
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


@dataclass(frozen=True, eq=False)
class NeumannLaplacian:
    """Discrete ``-Delta`` with homogeneous Neumann conditions (SPD on zero-mean fields)."""

    grid: Grid
    matrix: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        L1 = _neumann_1d(g.n, g.h)
        if g.dim == 1:
            L = L1
        else:
            eye = sp.identity(g.n, format="csr")
            L = (sp.kron(L1, eye) + sp.kron(eye, L1)).tocsr()
        object.__setattr__(self, "matrix", L)

    @cached_property
    def _bordered_lu(self):
        # [[L, 1], [1^T, 0]]: the multiplier row enforces zero mean, keeping symmetry
        N = self.grid.size
        ones = sp.csr_matrix(np.ones((N, 1)))
        A = sp.bmat([[self.matrix, ones], [ones.T, None]], format="csc")
        return spla.splu(A)

    @cached_property
    def first_eigenvalue(self) -> float:
        """Smallest nonzero eigenvalue ``(2/h sin(pi h/2))^2`` of the stencil."""
        h = self.grid.h
        return (2.0 / h * math.sin(math.pi * h / 2.0)) ** 2


def _check(L: NeumannLaplacian, f: Field):
    if f.grid != L.grid:
        raise GridMismatchError(f"{f.grid} vs {L.grid}")


def apply_negL(L: NeumannLaplacian, phi: Field) -> Field:
    _check(L, phi)
    return Field(L.grid, L.matrix @ phi.values)


def inverse_N(L: NeumannLaplacian, f: Field, mean_tol: float = 1e-10) -> Field:
    """Zero-mean solution of ``-Delta psi = f`` for zero-mean ``f``."""
    _check(L, f)
    m = mean(f)
    if abs(m) > mean_tol:
        raise ValueError(f"inverse_N needs a zero-mean field, got mean {m:.3e}")
    N = L.grid.size
    rhs = np.append(f.values, 0.0)
    psi = L._bordered_lu.solve(rhs)[:N]
    res = np.linalg.norm(L.matrix @ psi - f.values) * math.sqrt(L.grid.cell_volume)
    fnorm = math.sqrt(inner_h(f, f))
    if res > 1e-11 * max(fnorm, 1e-300) and res > 1e-14:
        raise ConvergenceError("Neumann solve lost accuracy", res)
    return Field(L.grid, psi)


def norm_Vstar(L: NeumannLaplacian, f: Field) -> float:
    """``sqrt((f0, N f0) + mean(f)^2)``; the mean term is diagnostic plumbing."""
    m = mean(f)
    f0 = Field(f.grid, f.values - m)
    val = inner_h(f0, inverse_N(L, f0, mean_tol=1e-9)) + m * m
    return math.sqrt(max(val, 0.0))


def dirichlet_energy(L: NeumannLaplacian, phi: Field) -> float:
    return 0.5 * inner_h(apply_negL(L, phi), phi)


def face_difference_energy(grid: Grid, values: np.ndarray) -> float:
    """``1/2 sum over interior faces of h^d ((u_i - u_j)/h)^2``, written out directly."""
    u = np.asarray(values, dtype=float).reshape((grid.n,) * grid.dim)
    total = 0.0
    for axis in range(grid.dim):
        d = np.diff(u, axis=axis) / grid.h
        total += lr_sum((d * d).ravel())
    return 0.5 * grid.cell_volume * total
