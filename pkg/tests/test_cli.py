import pytest

from nonlocal_blowup.cli import EXIT_ERROR, EXIT_OK, build_parser, main


def test_constants(capsys):
    assert main(["constants", "--set", "model.gamma=0.02", "--set", "model.critical=true"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "beta" in out and "0.0303030303" in out


def test_simulate_diagnose_fit(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--set", "grid.n_nodes=600", "--output", str(out)])
    assert code in (0, 2)
    assert (out / "summary.csv").exists() and (out / "profile_error.csv").exists()
    text = capsys.readouterr().out
    assert "blowup" in text
    assert main(["diagnose", str(out)]) in (0, 2)
    assert "recorded" in capsys.readouterr().out


def test_fit_on_csv(tmp_path, capsys):
    path = tmp_path / "v.csv"
    rows = ["L,v"] + [f"{L!r},{L ** -0.25!r}" for L in (float(k) for k in range(5, 60))]
    path.write_text("\n".join(rows) + "\n")
    assert main(["fit", str(path), "--s-col", "L", "--v-col", "v"]) == EXIT_OK
    slope = float(capsys.readouterr().out.split()[1])
    assert slope == pytest.approx(-0.25, abs=1e-12)
    assert main(["fit", str(path), "--v-col", "v"]) == EXIT_ERROR


def test_config_error_exit(tmp_path, capsys):
    assert main(["constants", "--set", "model.bogus=1"]) == EXIT_ERROR
    assert "config error" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nn_nodes = ten\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_ERROR


def test_verify_initial_data(tmp_path, capsys):
    assert main(["verify-initial-data", "--set", "model.gamma=0.02", "--set", "model.critical=true", "--output", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "prepared_data.csv").exists()
    assert "member" in capsys.readouterr().out


def test_model_sweep_uses_env_output(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NONLOCAL_BLOWUP_OUTPUT", str(tmp_path))
    assert main(["sweep", "--mode", "model"]) == EXIT_OK
    made = list(tmp_path.glob("sweep-*"))
    assert len(made) == 1 and (made[0] / "sweep.csv").exists()


def test_parser_requires_a_verb():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
