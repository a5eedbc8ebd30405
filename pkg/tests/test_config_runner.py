import csv

import numpy as np
import pytest

from nlch.config import RunConfig, parse_config
from nlch.errors import ConvergenceError
from nlch.geometry import read_field_csv
from nlch.runner import build_operators, manifest_text, run

from conftest import small_config


def test_defaults_and_round_trip():
    cfg = small_config(potential="logarithmic", mode="local", lam=1e-3)
    again = parse_config(cfg.to_ini())
    assert again == cfg
    assert cfg.solver.mode == "local" and cfg.potential.kind == "logarithmic"
    assert cfg.init.amplitudes == (0.4, 0.2, 0.1)


def test_manifest_reparses_to_same_config():
    cfg = small_config()
    cfg.extra["sweep"] = {"eps": "0.2,0.1", "tau_rule": "eps"}
    text = manifest_text(cfg, "nlch sweep-eps x.ini", {"status": "ok"})
    assert text.startswith("[manifest]")
    assert parse_config(text) == cfg


def test_percent_signs_survive():
    cfg = small_config()
    cfg.extra["notes"] = {"comment": "50% done"}
    assert parse_config(cfg.to_ini()).section("notes")["comment"] == "50% done"


@pytest.mark.parametrize("text, msg", [
    ("[kernel]\nfamily = gaussian\n", "family"),
    ("[kernel]\nquadrature = simpson\n", "quadrature"),
    ("[domain]\nn = 16\n[kernel]\nepsilon = 0.1\n", "2h"),
    ("[potential]\ntype = logarithmic\n[init]\nmean = 0.9995\n", "mean"),
])
def test_invalid_configs_rejected(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_config(text)


def test_local_mode_ignores_epsilon_resolution():
    cfg = parse_config("[domain]\nn = 16\n[kernel]\nepsilon = 0.05\n[solver]\nmode = local\n")
    assert build_operators(cfg).B is None


def test_run_writes_outputs(tmp_path):
    cfg = small_config(t_final=0.005)
    cfg = cfg.with_solver(snapshots=2)
    traj = run(cfg, tmp_path)
    with open(tmp_path / "diagnostics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "t", "mass", "E_nl", "E_pot", "E_reg", "E_total",
                       "grad_mu_sq", "newton_iters", "step_residual"]
    assert len(rows) == 1 + len(traj.records) == 7
    snaps = sorted(p.name for p in (tmp_path / "snapshots").iterdir())
    assert snaps == [f"u_{n:06d}.csv" for n in traj.steps]
    last = read_field_csv(tmp_path / "snapshots" / snaps[-1], cfg.grid)
    assert np.array_equal(last.values, traj.u[-1])
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "status = completed" in manifest
    assert parse_config(manifest) == cfg


def test_run_abort_writes_partial_output(tmp_path):
    cfg = small_config(potential="logarithmic", lam=1e-6)
    cfg = cfg.with_solver(dt=1.0, t_final=2.0, newton_max=1, newton_tol=1e-14)
    with pytest.raises(ConvergenceError):
        run(cfg, tmp_path)
    assert (tmp_path / "diagnostics.csv").exists()
    state = np.load(tmp_path / "abort_state.npz")
    assert {"u_prev", "u_iter", "g"} <= set(state.files)
    assert "aborted" in (tmp_path / "manifest.txt").read_text()


def test_run_is_deterministic():
    cfg = small_config(t_final=0.004)
    a, b = run(cfg), run(cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.u, b.u))


def test_runconfig_replace():
    cfg = RunConfig()
    assert cfg.replace(epsilon=0.2).epsilon == 0.2
    assert cfg.with_solver(dt=0.5).solver.dt == 0.5 and cfg.solver.dt != 0.5
