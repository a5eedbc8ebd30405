import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nlch.errors import ConvergenceError
from nlch.geometry import Field, Grid, InitSpec, make_field, mean
from nlch.kernels import assemble_kernel, make_mollifier
from nlch.local_ops import NeumannLaplacian
from nlch.nonlocal_ops import NonlocalOperator
from nlch.potentials import KINDS, PotentialSpec, YosidaApprox
from nlch.stepper import (
    DiagnosticsRecord, Forcing, Operators, SolverParams, dissipation_budget, integrate,
    regularize_initial, step,
)

GRID = Grid(1, 48)
LAP = NeumannLaplacian(GRID)
BOP = NonlocalOperator(assemble_kernel(GRID, make_mollifier("bump", 0.15, 1)))


def ops_for(kind="polynomial", lam=1e-4, grid=GRID):
    B = BOP if grid == GRID else NonlocalOperator(assemble_kernel(grid, make_mollifier("bump", 0.15, grid.dim)))
    L = LAP if grid == GRID else NeumannLaplacian(grid)
    return Operators(grid, YosidaApprox(PotentialSpec(kind), lam), L, B)


def smooth_u0(grid=GRID, mean_=0.1):
    return make_field(grid, InitSpec("cosine", mean=mean_, modes=(1, 2, 3), amplitudes=(0.4, 0.2, 0.1)))


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(mode="nonlocal", tau=0.0)
    SolverParams(mode="local", tau=0.0)
    with pytest.raises(ValueError):
        SolverParams(mode="spectral")
    with pytest.raises(ValueError):
        SolverParams(dt=0.0)
    with pytest.raises(ValueError):
        SolverParams(lambda_yosida=0.0)
    with pytest.raises(ValueError):
        SolverParams(lambda_reg=-1.0)
    assert SolverParams(mode="local", lambda_reg=0.3).effective_lambda_reg == 0.0


def test_forcing_schedules():
    g = Grid(1, 8)
    assert np.all(Forcing().values(g, 0.7) == 0.0)
    f = Forcing("time_ramp", amplitude=2.0, t_ramp=0.5)
    assert f.time_factor(0.0) == 0.0 and f.time_factor(0.5) == 1.0 and f.time_factor(3.0) == 1.0
    h = 1e-6
    # C^1: one-sided slopes agree at the ramp end
    left = (f.time_factor(0.5) - f.time_factor(0.5 - h)) / h
    assert abs(left) < 1e-4
    assert np.allclose(Forcing("constant", amplitude=1.0, offset=0.5).values(g, 0.0),
                       0.5 + np.cos(math.pi * g.axis))
    with pytest.raises(ValueError):
        Forcing("pulse")


def test_regularize_initial():
    u0 = make_field(GRID, InitSpec("random", mean=0.2, amplitude=0.5, seed=1))
    assert regularize_initial(u0, 0.0, LAP) is u0
    c = Field(GRID, np.full(GRID.size, 0.3))
    assert np.allclose(regularize_initial(c, 0.1, LAP).values, 0.3, atol=1e-14)
    v = regularize_initial(u0, 0.01, LAP)
    assert abs(mean(v) - mean(u0)) <= 1e-12
    assert np.allclose(v.values + 0.01 * (LAP.matrix @ v.values), u0.values, atol=1e-12)
    with pytest.raises(ValueError):
        regularize_initial(u0, -1.0, LAP)


@pytest.mark.parametrize("mode", ["nonlocal", "local"])
@pytest.mark.parametrize("kind", KINDS)
def test_constant_state_is_equilibrium(mode, kind):
    ops = ops_for(kind)
    u = Field(GRID, np.full(GRID.size, 0.2))
    p = SolverParams(mode=mode, dt=1e-2)
    u1, mu, rec = step(u, p, ops, 0.0)
    assert np.allclose(u1.values, 0.2, atol=1e-14)
    assert np.ptp(mu.values) <= 1e-12


@pytest.mark.parametrize("mode", ["nonlocal", "local"])
def test_single_step_mass_and_newton(mode):
    ops = ops_for()
    u = make_field(GRID, InitSpec("random", mean=0.1, amplitude=0.3, seed=4))
    p = SolverParams(mode=mode, dt=1e-3)
    u1, mu, rec = step(u, p, ops, 0.0)
    assert abs(mean(u1) - mean(u)) <= 1e-11
    assert rec.step_residual <= p.newton_tol
    hist = rec.residual_history
    assert hist[-1] <= p.newton_tol
    # recovered mu satisfies the elimination identity (u1 - u)/dt = -L mu
    lhs = (u1.values - u.values) / p.dt
    assert np.max(np.abs(lhs + LAP.matrix @ mu.values)) <= 1e-6 * np.max(np.abs(lhs))


def test_newton_tail_is_quadratic():
    ops = ops_for("logarithmic", 1e-3)
    u = make_field(GRID, InitSpec("cosine", mean=0.0, modes=(1, 2), amplitudes=(0.8, 0.15)))
    p = SolverParams(mode="nonlocal", dt=5e-2, newton_tol=1e-13)
    _, _, rec = step(u, p, ops, 0.0)
    hist = rec.residual_history
    assert len(hist) >= 3
    # once in the basin each residual is bounded by C r^2 (or the round-off floor)
    tail = [(a, b) for a, b in zip(hist, hist[1:]) if a < 1e-2]
    assert tail
    for a, b in tail:
        assert b <= max(100.0 * a * a, 1e-12)


def test_small_dt_matches_explicit_euler():
    ops = ops_for()
    u0 = smooth_u0()
    p = SolverParams(mode="nonlocal", tau=0.05, dt=1e-8)
    u1, _, _ = step(u0, p, ops, 0.0)
    change = math.sqrt(GRID.cell_volume * np.sum((u1.values - u0.values) ** 2))
    assert change <= 1e-5
    # explicit prediction: (I + tau L) du = -dt L (A u + gamma(u) + Pi(u))
    u = u0.values
    rhs = BOP.apply(u) + ops.yosida.gamma(u) + ops.yosida.potential.pi(u)
    M = (sp.identity(GRID.size) + p.tau * LAP.matrix).tocsc()
    du = spla.spsolve(M, -p.dt * (LAP.matrix @ rhs))
    assert np.max(np.abs((u1.values - u) - du)) <= 1e-3 * np.max(np.abs(du))


@pytest.mark.parametrize("mode", ["nonlocal", "local"])
@pytest.mark.parametrize("kind", KINDS)
def test_energy_decreases_and_budget_holds(mode, kind):
    ops = ops_for(kind, 1e-3)
    p = SolverParams(mode=mode, tau=0.05, lambda_reg=1e-3, lambda_yosida=1e-3, dt=2e-3, t_final=0.06)
    traj = integrate(smooth_u0(), p, ops)
    E = [r.E_total for r in traj.records]
    assert all(b <= a + 10 * p.newton_tol for a, b in zip(E, E[1:]))
    spent, drop = dissipation_budget(traj)
    assert spent <= drop + 1e-9
    mass = [r.mass for r in traj.records]
    assert max(abs(m - mass[0]) for m in mass) <= len(mass) * 1e-11


def test_run_from_constant_stays_constant():
    ops = ops_for()
    p = SolverParams(mode="nonlocal", dt=1e-3, t_final=0.01, snapshots=5)
    traj = integrate(Field(GRID, np.full(GRID.size, 0.2)), p, ops)
    assert all(np.allclose(u, 0.2, atol=1e-13) for u in traj.u)
    assert traj.steps == [0, 2, 4, 6, 8, 10]
    assert traj.completed


def test_snapshot_schedule_includes_final_step():
    ops = ops_for()
    p = SolverParams(mode="local", dt=1e-3, t_final=0.007, snapshots=3)
    traj = integrate(smooth_u0(), p, ops)
    assert traj.steps == [0, 2, 4, 6, 7]
    assert len(traj.records) == 8


def test_records_finite_and_csv_fields():
    ops = ops_for("logarithmic")
    p = SolverParams(mode="nonlocal", dt=1e-3, t_final=0.003)
    traj = integrate(smooth_u0(), p, ops)
    for r in traj.records:
        vals = [getattr(r, k) for k in DiagnosticsRecord.CSV_FIELDS]
        assert all(np.isfinite(v) for v in vals)
    assert DiagnosticsRecord.CSV_FIELDS == ("step", "t", "mass", "E_nl", "E_pot", "E_reg", "E_total",
                                            "grad_mu_sq", "newton_iters", "step_residual")


def test_newton_failure_reports_state():
    ops = ops_for("logarithmic", 1e-6)
    p = SolverParams(mode="nonlocal", dt=1.0, newton_max=1, newton_tol=1e-14)
    u = smooth_u0(mean_=0.0)
    with pytest.raises(ConvergenceError) as info:
        step(u, p, ops, 0.0)
    assert "u_prev" in info.value.state and info.value.residual > 0
    seen = []
    with pytest.raises(ConvergenceError):
        integrate(u, p, ops, on_abort=lambda traj, exc: seen.append(len(traj.records)))
    assert seen == [1]


def test_obstacle_penetration_shrinks_with_lambda():
    grid = Grid(1, 48)
    excess = []
    for lam in (1e-2, 1e-3, 1e-4):
        ops = Operators(grid, YosidaApprox(PotentialSpec("obstacle", c=15.0), lam), LAP, BOP)
        p = SolverParams(mode="nonlocal", tau=0.05, dt=2e-3, t_final=0.1, lambda_yosida=lam)
        traj = integrate(make_field(grid, InitSpec("random", mean=0.0, amplitude=0.3, seed=2)), p, ops)
        excess.append(max(float(np.max(np.abs(u))) for u in traj.u) - 1.0)
    assert excess[0] > excess[1] > excess[2] > 0
