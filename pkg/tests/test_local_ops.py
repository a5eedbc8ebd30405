import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nlch.errors import GridMismatchError
from nlch.geometry import Field, Grid, inner_h, mean, norm_h
from nlch.local_ops import (
    NeumannLaplacian, apply_negL, dirichlet_energy, face_difference_energy, inverse_N, norm_Vstar,
)

LAPS = {"1d": NeumannLaplacian(Grid(1, 40)), "2d": NeumannLaplacian(Grid(2, 9))}
lap_keys = st.sampled_from(sorted(LAPS))
vals = arrays(float, 81, elements=st.floats(-5, 5))


def field(L, v):
    return Field(L.grid, np.resize(v, L.grid.size))


def zero_mean(L, v):
    x = np.resize(np.asarray(v, dtype=float), L.grid.size)
    return Field(L.grid, x - x.mean())


@pytest.mark.parametrize("key", sorted(LAPS))
def test_matrix_structure(key):
    A = LAPS[key].matrix.toarray()
    assert np.array_equal(A, A.T)
    assert np.allclose(A.sum(axis=1), 0.0, atol=1e-9)
    assert np.allclose(A.sum(axis=0), 0.0, atol=1e-9)
    assert np.min(np.linalg.eigvalsh(A)) > -1e-9


def test_stencil_1d_interior_and_boundary():
    L = NeumannLaplacian(Grid(1, 5))
    A = L.matrix.toarray() * L.grid.h**2
    assert A[2].tolist() == [0, -1, 2, -1, 0]
    assert A[0].tolist() == [1, -1, 0, 0, 0]


def test_first_eigenvalue_matches_dense_spectrum():
    for L in LAPS.values():
        ev = np.sort(np.linalg.eigvalsh(L.matrix.toarray()))
        assert ev[1] == pytest.approx(L.first_eigenvalue, rel=1e-10)


def test_cosine_examples():
    g = Grid(1, 256)
    L = NeumannLaplacian(g)
    c = Field(g, np.cos(math.pi * g.axis))
    assert inner_h(apply_negL(L, c), c) == pytest.approx(math.pi**2 / 2, rel=0.02)
    assert dirichlet_energy(L, c) == pytest.approx(math.pi**2 / 4, rel=0.02)
    psi = inverse_N(L, c)
    assert np.allclose(psi.values, c.values / math.pi**2, rtol=0, atol=0.02 / math.pi**2)
    assert norm_Vstar(L, c) == pytest.approx(math.sqrt(0.5) / math.pi, rel=0.02)


@given(lap_keys, vals)
def test_output_zero_mean(key, v):
    L = LAPS[key]
    assert abs(mean(apply_negL(L, field(L, v)))) <= 1e-12 * L.grid.n**2 * 5


@given(lap_keys, vals, vals)
def test_symmetric(key, a, b):
    L = LAPS[key]
    fa, fb = field(L, a), field(L, b)
    diff = inner_h(apply_negL(L, fa), fb) - inner_h(fa, apply_negL(L, fb))
    assert abs(diff) <= 1e-11 * L.grid.n**2 * (1 + norm_h(fa) * norm_h(fb))


@given(lap_keys, vals)
def test_inverse_round_trips(key, v):
    L = LAPS[key]
    f = zero_mean(L, v)
    psi = inverse_N(L, f)
    assert abs(mean(psi)) <= 1e-12 * (1 + norm_h(f))
    assert np.max(np.abs(apply_negL(L, psi).values - f.values)) <= 1e-10 * (1 + np.max(np.abs(f.values)))
    back = inverse_N(L, apply_negL(L, f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-10 * (1 + np.max(np.abs(f.values)))


def test_inverse_of_zero_and_nonzero_mean():
    L = LAPS["1d"]
    assert np.all(inverse_N(L, Field(L.grid, np.zeros(40))).values == 0.0)
    with pytest.raises(ValueError):
        inverse_N(L, Field(L.grid, np.ones(40)))


@given(lap_keys, vals)
def test_vstar_spectral_bound(key, v):
    L = LAPS[key]
    f = field(L, v)
    C = 1.0 / L.first_eigenvalue + 1.0
    assert norm_Vstar(L, f) <= C * norm_h(f) + 1e-12


def test_vstar_of_zero_and_constant():
    L = LAPS["2d"]
    assert norm_Vstar(L, Field(L.grid, np.zeros(81))) == 0.0
    assert norm_Vstar(L, Field(L.grid, np.full(81, -0.3))) == pytest.approx(0.3, rel=1e-12)


@given(lap_keys, vals)
def test_dirichlet_energy_face_sum(key, v):
    L = LAPS[key]
    f = field(L, v)
    e = dirichlet_energy(L, f)
    assert e >= -1e-12
    assert e == pytest.approx(face_difference_energy(L.grid, f.values), rel=1e-11, abs=1e-9)


def test_dirichlet_energy_zero_iff_constant(rng):
    L = LAPS["2d"]
    assert dirichlet_energy(L, Field(L.grid, np.full(81, 2.0))) == pytest.approx(0.0, abs=1e-12)
    assert dirichlet_energy(L, Field(L.grid, rng.standard_normal(81))) > 1e-3


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        apply_negL(LAPS["1d"], Field(Grid(1, 8), np.ones(8)))
