import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_blowup.harness import (
    ConfigError,
    ExperimentRecord,
    RunConfig,
    StageError,
    Verdict,
    export,
    fit_log_exponent,
    fit_log_exponent_s,
    read_summary,
    run_experiment,
    shooting_sweep,
    summary_csv,
)

INI = """
[run]
seed = 7
output = runs/demo   # trailing comment

[model]
p = 3
gamma = 0.02
critical = true

[grid]
n_nodes = 800
"""


def test_parse_ini_and_overrides():
    cfg = RunConfig.from_ini(INI, ["solver.safety=0.01", "initial.kind=prepared"])
    assert cfg.seed == 7 and cfg.output == "runs/demo"
    assert cfg.model.gamma == 0.02 and cfg.model.critical is True
    assert cfg.grid.n_nodes == 800 and isinstance(cfg.grid.n_nodes, int)
    assert cfg.solver.safety == 0.01
    assert cfg.initial.kind == "prepared"
    assert cfg.parameters().is_critical


def test_canonical_round_trip_and_hash():
    cfg = RunConfig.from_ini(INI)
    again = RunConfig.from_ini(cfg.to_ini())
    assert again == cfg and again.config_hash == cfg.config_hash
    assert cfg.with_overrides(["grid.n_nodes=801"]).config_hash != cfg.config_hash


@given(
    gamma=st.floats(0.0, 0.05),
    n=st.integers(16, 5000),
    safety=st.floats(1e-3, 0.5),
    scheme=st.sampled_from(["imex", "imex-rk2", "explicit-euler"]),
)
@settings(max_examples=40, deadline=None)
def test_round_trip_property(gamma, n, safety, scheme):
    cfg = RunConfig().with_overrides([f"model.gamma={gamma!r}", f"grid.n_nodes={n}", f"solver.safety={safety!r}", f"solver.scheme={scheme}"])
    assert RunConfig.from_ini(cfg.to_ini()) == cfg


@pytest.mark.parametrize(
    "text,overrides",
    [
        ("[model]\nbogus = 1\n", []),
        ("[nowhere]\nx = 1\n", []),
        ("", ["grid.n_nodes=abc"]),
        ("", ["grid.n_nodes=8"]),
        ("", ["model.p=0.5"]),
        ("", ["solver.scheme=rk4"]),
        ("", ["run.seed=1.5"]),
        ("", ["no_dot=1"]),
        ("", ["sweep.workers=0"]),
    ],
)
def test_config_errors(text, overrides):
    with pytest.raises(ConfigError):
        RunConfig.from_ini(text, overrides)


@given(alpha=st.floats(-0.5, 0.5), C=st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_fit_recovers_log_power(alpha, C):
    T = 0.3
    t = T - np.geomspace(1e-2, 1e-12, 60)
    tau = T - t
    v = C * np.abs(np.log(tau)) ** alpha
    slope, err = fit_log_exponent(t, v, T)
    assert slope == pytest.approx(alpha, abs=1e-10)
    assert err < 1e-8  # roundoff only; the data are an exact power law
    s_slope, _ = fit_log_exponent_s(np.abs(np.log(tau)), v)
    assert s_slope == pytest.approx(alpha, abs=1e-10)


def test_fit_guards():
    tau = np.geomspace(1e-2, 1e-3, 30)
    with pytest.raises(ValueError):
        fit_log_exponent(1 - tau, np.ones(30), 1.0)
    with pytest.raises(ValueError):
        fit_log_exponent(np.zeros(5), np.ones(5), 1.0)
    with pytest.raises(ValueError):
        fit_log_exponent_s(np.arange(30.0), np.ones(30))


def test_summary_round_trip():
    rec = ExperimentRecord(
        "abc",
        {"T_est": np.float64(0.25), "status": "blowup, stopped"},
        {"theta": (np.float64(-0.03), 1e-5, -0.031, -0.029)},
        [Verdict("blowup", True, "ok, fine"), Verdict("other", False, "bad")],
    )
    back = read_summary(summary_csv(rec))
    assert back.config_hash == "abc"
    assert back.summary["T_est"] == 0.25
    assert back.summary["status"] == "blowup; stopped"
    assert back.exponents["theta"] == (-0.03, 1e-5, -0.031, -0.029)
    assert [v.passed for v in back.verdicts] == [True, False]


def test_export_writes_every_table(tmp_path):
    rec = ExperimentRecord("abc", {}, {}, [], {"series": "t,sup_u,theta,dt\n0.0,1.0,1.0,0.0\n"}, "[run]\n")
    paths = export(rec, tmp_path / "out")
    names = {p.name for p in paths}
    assert {"series.csv", "profile_error.csv", "modes.csv", "theta.csv", "p2.csv", "summary.csv", "config.ini", "plot_diagnostics.py"} <= names
    assert (tmp_path / "out" / "theta.csv").read_text() == "L,theta\n"
    compile((tmp_path / "out" / "plot_diagnostics.py").read_text(), "plot_diagnostics.py", "exec")
    with pytest.raises(ValueError):
        export(rec, tmp_path / "x", formats=("hdf5",))


def test_small_classical_experiment():
    cfg = RunConfig().with_overrides(["grid.n_nodes=600", "solver.safety=0.05"])
    rec = run_experiment(cfg)
    names = [v.name for v in rec.verdicts]
    assert names == ["blowup", "profile-error-decreasing", "W0-near-kappa"]
    assert rec.verdicts[0].passed
    assert rec.summary["final_W0_over_kappa"] == pytest.approx(1.0, abs=0.2)
    assert rec.tables["profile_error"].startswith("s,profile_error,W0_over_kappa\n")


def test_stage_errors_are_tagged():
    cfg = RunConfig().with_overrides(["initial.kind=prepared", "grid.n_nodes=100"])
    with pytest.raises(StageError) as info:
        run_experiment(cfg)
    assert info.value.stage == "initial-data"


def test_model_sweep_small():
    res = shooting_sweep(RunConfig(), d0_values=[-1.0, 0.0, 1.0], d1_values=[-1.0, 0.0, 1.0], mode="model")
    assert len(res.points) == 9
    assert res.sign_change
    assert res.boundary_exits_via_q01
    assert all(p.steps <= 3 for p in res.boundary_points)
    centre = next(p for p in res.points if p.d0 == 0.0 and p.d1 == 0.0)
    assert centre.exit_s > res.s0
    assert res.to_csv().splitlines()[0].startswith("d0,d1,")
    assert len(res.map_text().splitlines()) == 3


def test_pde_sweep_corner():
    cfg = RunConfig().with_overrides(["sweep.n_nodes=2000"])
    res = shooting_sweep(cfg, d0_values=[-2.0, 2.0], d1_values=[0.0], mode="pde")
    signs = {p.d0: p.exit_sign for p in res.points}
    assert all(p.exit_clause == "q0" for p in res.points)
    assert signs[-2.0] == -1 and signs[2.0] == 1
    assert math.isfinite(res.points[0].exit_s)
