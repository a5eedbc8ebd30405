import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nlch.errors import GridMismatchError
from nlch.geometry import Field, Grid, inner_h, mean, norm_h
from nlch.kernels import assemble_kernel, make_mollifier
from nlch.nonlocal_ops import NonlocalOperator, apply_B, energy_E, norm_Veps, resolvent_B


def make_op(dim=1, n=48, family="bump", eps=0.2):
    return NonlocalOperator(assemble_kernel(Grid(dim, n), make_mollifier(family, eps, dim)))


OPS = {
    "1d-bump": make_op(1, 48, "bump", 0.2),
    "1d-indicator": make_op(1, 48, "indicator", 0.15),
    "2d-bump": make_op(2, 12, "bump", 0.3),
    "2d-indicator": make_op(2, 12, "indicator", 0.3),
}
op_keys = st.sampled_from(sorted(OPS))


def field(op, values):
    return Field(op.grid, np.resize(values, op.grid.size))


def brute_B(op, phi):
    """Double loop over the defining sum."""
    K = op.kernel.entries
    n = phi.size
    return np.array([sum(K[i, j] * (phi[i] - phi[j]) for j in range(n)) for i in range(n)])


def brute_E(op, phi):
    K = op.kernel.entries
    d = phi[:, None] - phi[None, :]
    return 0.25 * math.fsum((K * d * d).ravel()) * op.grid.cell_volume


vals = arrays(float, 144, elements=st.floats(-5, 5))


@pytest.mark.parametrize("key", sorted(OPS))
def test_constants_annihilated(key):
    op = OPS[key]
    assert np.max(np.abs(apply_B(op, Field(op.grid, np.full(op.grid.size, 3.7))).values)) <= 1e-13 * 3.7 * np.max(op.kernel.row_sums)
    assert energy_E(op, Field(op.grid, np.full(op.grid.size, -2.0))) == 0.0


@pytest.mark.parametrize("key", sorted(OPS))
def test_apply_matches_double_sum(key, rng):
    op = OPS[key]
    phi = rng.standard_normal(op.grid.size)
    ref = brute_B(op, phi)
    assert np.allclose(apply_B(op, Field(op.grid, phi)).values, ref, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))
    assert np.allclose(op.matrix @ phi, ref, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))


@given(op_keys, vals)
def test_B_output_has_zero_mean(key, v):
    op = OPS[key]
    out = apply_B(op, field(op, v))
    scale = max(1.0, np.max(op.kernel.row_sums) * np.max(np.abs(v), initial=0.0))
    assert abs(mean(out)) <= 1e-12 * scale


@given(op_keys, vals, vals)
def test_B_self_adjoint(key, a, b):
    op = OPS[key]
    fa, fb = field(op, a), field(op, b)
    lhs, rhs = inner_h(apply_B(op, fa), fb), inner_h(fa, apply_B(op, fb))
    scale = max(1.0, np.max(op.kernel.row_sums)) * (1 + norm_h(fa) * norm_h(fb))
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(op_keys, vals, vals, st.floats(-3, 3), st.floats(-3, 3))
def test_B_linear(key, a, b, s, t):
    op = OPS[key]
    fa, fb = field(op, a), field(op, b)
    lhs = apply_B(op, field(op, s * np.resize(a, op.grid.size) + t * np.resize(b, op.grid.size))).values
    rhs = s * apply_B(op, fa).values + t * apply_B(op, fb).values
    scale = max(1.0, np.max(op.kernel.row_sums)) * 30
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@given(op_keys, vals)
def test_energy_identity_and_positivity(key, v):
    op = OPS[key]
    f = field(op, v)
    E = energy_E(op, f)
    assert E >= 0.0
    assert 2 * E == pytest.approx(inner_h(apply_B(op, f), f), rel=1e-10, abs=1e-10)
    assert E == pytest.approx(brute_E(op, f.values), rel=1e-12, abs=1e-14)


def test_energy_of_cosine_close_to_dirichlet():
    g = Grid(1, 256)
    op = NonlocalOperator(assemble_kernel(g, make_mollifier("bump", 0.05, 1)))
    E = energy_E(op, Field(g, np.cos(math.pi * g.axis)))
    assert E == pytest.approx(math.pi**2 / 4, rel=0.10)


@pytest.mark.parametrize("key", sorted(OPS))
def test_norm_Veps(key, rng):
    op = OPS[key]
    assert norm_Veps(op, Field(op.grid, np.ones(op.grid.size))) == pytest.approx(1.0, abs=1e-14)
    f = Field(op.grid, rng.standard_normal(op.grid.size))
    v = norm_Veps(op, f)
    assert v >= norm_h(f)
    assert v == pytest.approx(math.sqrt(inner_h(f, f) + 2 * brute_E(op, f.values)), rel=1e-12)


@pytest.mark.parametrize("key", sorted(OPS))
def test_resolvent_properties(key, rng):
    op = OPS[key]
    c = Field(op.grid, np.full(op.grid.size, 0.4))
    assert np.allclose(resolvent_B(op, 0.3, c).values, 0.4, atol=1e-13)
    phi = Field(op.grid, rng.standard_normal(op.grid.size))
    for delta in (1.0, 0.1, 1e-3):
        pd = resolvent_B(op, delta, phi)
        assert norm_Veps(op, pd) <= norm_Veps(op, phi) * (1 + 1e-12)
        assert norm_h(pd) <= norm_h(phi) * (1 + 1e-12)
        resid = pd.values + delta * op.apply(pd.values) - phi.values
        assert np.linalg.norm(resid) <= 1e-11 * np.linalg.norm(phi.values)
    gaps = [norm_h(Field(op.grid, resolvent_B(op, d, phi).values - phi.values)) for d in (0.1, 0.01, 0.001)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_resolvent_rejects_nonpositive_delta():
    op = OPS["1d-bump"]
    with pytest.raises(ValueError):
        resolvent_B(op, 0.0, Field(op.grid, np.ones(op.grid.size)))


def test_grid_mismatch():
    op = OPS["1d-bump"]
    with pytest.raises(GridMismatchError):
        apply_B(op, Field(Grid(1, 16), np.ones(16)))
    with pytest.raises(GridMismatchError):
        energy_E(op, Field(Grid(1, 16), np.ones(16)))
