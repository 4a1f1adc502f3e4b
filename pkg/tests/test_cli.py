import json

import pytest
from click.testing import CliRunner

from ntn_offload.cli import main

SMALL_FEAS = """\
experiment:
  name: feasibility
  sweep_values: [0.05, 0.1]
  trials: 1
  overrides: {scenario.num_iot: 4, scenario.num_malicious: 2}
"""


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.delenv("NTN_SEED", raising=False)
    monkeypatch.delenv("NTN_OUT_DIR", raising=False)
    return CliRunner()


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(SMALL_FEAS)
    return p


def test_feasibility_writes_csv_and_extras(runner, small_cfg, tmp_path):
    out = tmp_path / "f.csv"
    res = runner.invoke(main, ["feasibility", "--config", str(small_cfg), "--seed", "2",
                               "--out", str(out), "--dump-scenario", "--trace-bcd"])
    assert res.exit_code == 0, res.output
    text = out.read_text()
    assert "# seed=2" in text and "series,sweep_variable" in text
    scen = json.loads((tmp_path / "f_scenario.json").read_text())
    assert len(scen["iot_positions"]) == 4
    assert (tmp_path / "f_tasks.csv").read_text().startswith("id,")
    assert (tmp_path / "f_trace.csv").exists()


def test_trace_rejected_for_admission(runner, tmp_path):
    res = runner.invoke(main, ["admission", "--trace-bcd", "--trials", "1",
                               "--out", str(tmp_path / "a.csv")])
    assert res.exit_code == 2
    assert "ConfigurationError" in res.output


def test_bad_config_exit_code(runner, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("pla:\n  rho_s_sq: 1.0\n  rho_t_sq: 0.5\n")
    res = runner.invoke(main, ["auth-roc", "--config", str(p)])
    assert res.exit_code == 2 and "pla.rho" in res.output
    res = runner.invoke(main, ["auth-roc", "--config", str(tmp_path / "missing.yaml")])
    assert res.exit_code == 2


def test_env_seed_and_out_dir(runner, small_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("NTN_SEED", "11")
    monkeypatch.setenv("NTN_OUT_DIR", str(tmp_path / "runs"))
    res = runner.invoke(main, ["feasibility", "--config", str(small_cfg), "--out", "x.csv"])
    assert res.exit_code == 0, res.output
    assert "# seed=11" in (tmp_path / "runs" / "x.csv").read_text()


def test_same_seed_same_body(runner, small_cfg, tmp_path):
    from ntn_offload.experiments import strip_metadata
    bodies = []
    for name in ("a.csv", "b.csv"):
        res = runner.invoke(main, ["feasibility", "--config", str(small_cfg), "--seed", "4",
                                   "--out", str(tmp_path / name)])
        assert res.exit_code == 0, res.output
        bodies.append(strip_metadata((tmp_path / name).read_text()))
    assert bodies[0] == bodies[1]


def test_help_and_version(runner):
    res = runner.invoke(main, ["--help"])
    assert res.exit_code == 0
    for cmd in ("auth-roc", "feasibility", "admission", "eta"):
        assert cmd in res.output
    assert runner.invoke(main, ["--version"]).exit_code == 0
    assert runner.invoke(main, ["feasibility", "--trials", "0"]).exit_code == 2
