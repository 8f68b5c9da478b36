from pathlib import Path

import numpy as np
import pytest
import yaml

from adaptive_tvopt import scenarios, trace_io
from adaptive_tvopt.cli import run_cli
from adaptive_tvopt.config import ConfigError, ValidationError, from_dict, load_config, loads

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "source_seek.cfg"


def _write(tmp_path, data, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if isinstance(data, dict) else data)
    return path


def _disconnected():
    d = scenarios.quad_si_dist()
    d["topology"] = {"adjacency": [[0, 1, 0, 0, 0], [1, 0, 0, 0, 0], [0, 0, 0, 1, 1], [0, 0, 1, 0, 1], [0, 0, 1, 1, 0]]}
    return d


# -- loading -----------------------------------------------------------------------


def test_shipped_config_matches_builtin():
    assert load_config(CONFIG).to_dict() == scenarios.builtin("source_seek").to_dict()


@pytest.mark.parametrize("name", list(scenarios.BUILTINS))
def test_normalized_dump_round_trips(name):
    sc = scenarios.builtin(name)
    again = loads(sc.dump())
    assert again.to_dict() == sc.to_dict()
    assert again.dump() == sc.dump()


def test_defaults_are_filled():
    sc = loads("controller: centralized_si\ndim: 1\nobjectives: [{family: quadratic_tracking, "
               "trajectory: {kind: harmonic, sin: [1.0]}}]\ninitial: {x: [[0.0]]}\n")
    raw = sc.to_dict()
    assert raw["integrator"] == {"method": "rk4", "step": 0.001, "t_end": 20.0, "record_every": 10}
    assert raw["gains"]["gamma1"] == [[1.0]]
    assert raw["initial"]["eta1"] == [[0.0]]


def test_empty_file_is_a_parse_error(tmp_path):
    with pytest.raises(ConfigError, match="empty"):
        load_config(_write(tmp_path, ""))


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 3"):
        load_config(_write(tmp_path, "name: x\ndim: 1\ngains: k1: 2\n"))


def test_structural_errors():
    d = scenarios.quad_si_central()
    d["controller"] = "pid"
    with pytest.raises(ConfigError, match="unknown controller"):
        from_dict(d)
    d = scenarios.quad_si_dist()
    d["objectives"] = d["objectives"][:4]
    with pytest.raises(ConfigError, match="4 objectives"):
        from_dict(d)
    d = scenarios.quad_si_central()
    d["objectives"][0]["trajectory"] = {"kind": "spline"}
    with pytest.raises(ConfigError, match="trajectory"):
        from_dict(d)


def test_disconnected_topology_rejected():
    with pytest.raises(ValidationError, match="A4.*connected"):
        from_dict(_disconnected())


def test_gain_condition_rejected():
    d = scenarios.source_seek()
    d["gains"]["k1"] = 4.0
    with pytest.raises(ValidationError, match=r"k1/\(2k2\^2\) = 1.653 >= lambda2 = 1.382"):
        from_dict(d)


def test_two_hop_cover_required_for_second_order():
    d = scenarios.source_seek()
    ring6 = np.roll(np.eye(6), 1, axis=1) + np.roll(np.eye(6), -1, axis=1)
    d["topology"] = {"adjacency": ring6.tolist()}
    d["objectives"].append(d["objectives"][0])
    d["initial"]["x"] = d["initial"]["x"] + [[0.0, 0.0]]
    d["plant"] = {"kind": "double_integrator"}
    d["gains"]["k1"] = 0.5
    with pytest.raises(ValidationError, match="A6.*agents 0 and 3"):
        from_dict(d)


def test_nonzero_estimator_sum_rejected():
    d = scenarios.quad_si_dist()
    d["initial"]["sigma"] = 0.1
    with pytest.raises(ValidationError, match="sum to zero"):
        from_dict(d)


def test_different_hessians_rejected_for_second_order():
    d = scenarios.source_seek()
    d["objectives"][0] = {**d["objectives"][0], "weights": [0.3, 0.0, 0.0, 0.0]}
    with pytest.raises(ValidationError, match="identical Omega"):
        from_dict(d)


def test_every_builtin_validates():
    for name in scenarios.BUILTINS:
        assert run_cli(["validate", f"builtin:{name}"]) == 0


# -- command line ---------------------------------------------------------------------


def test_cli_list(capsys):
    assert run_cli(["list"]) == 0
    out = capsys.readouterr().out
    for name in scenarios.BUILTINS:
        assert f"builtin:{name}" in out


def test_cli_oracle_source_seek(capsys):
    assert run_cli(["oracle", "builtin:source_seek", "--t", "0"]) == 0
    out = capsys.readouterr().out.strip()
    values = [float(v) for v in out.split("=")[1].strip(" []").split(",")]
    np.testing.assert_allclose(values, scenarios.source_seek_optimum(0.0), atol=1e-15)


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert run_cli(["validate", str(_write(tmp_path, _disconnected()))]) == 3
    assert "connected" in capsys.readouterr().err
    assert run_cli(["validate", str(_write(tmp_path, "", "empty.cfg"))]) == 2
    assert run_cli(["validate", str(tmp_path / "missing.cfg")]) == 2
    assert run_cli(["validate", "builtin:nope"]) == 2


def test_cli_validate_dump(capsys):
    assert run_cli(["validate", str(CONFIG), "--dump"]) == 0
    out = capsys.readouterr().out
    dumped = yaml.safe_load(out.split("\n", 1)[1])
    assert dumped == scenarios.builtin("source_seek").to_dict()


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        run_cli(["frobnicate"])
    assert info.value.code != 0
    with pytest.raises(SystemExit) as info:
        run_cli(["run", "builtin:quad_si_central", "--bogus"])
    assert info.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_cli_run_writes_trace_and_figure(tmp_path, capsys):
    out = tmp_path / "run"
    code = run_cli(["run", "builtin:quad_di_central", "--out", str(out), "--t-end", "1.0", "--step", "0.002", "--npz"])
    assert code == 0
    summary = capsys.readouterr().out
    assert "max tracking error over [0.75, 1]" in summary
    table = trace_io.read_csv(out / "trace.csv")
    assert list(table)[:4] == ["t", "x_1_1", "v_1_1", "xstar_1"]
    assert table["t"][-1] == pytest.approx(1.0)
    assert (out / "trace.svg").read_text().lstrip().startswith("<?xml")
    npz_table, cfg = trace_io.read_npz(out / "trace.npz")
    np.testing.assert_array_equal(npz_table["x_1_1"], table["x_1_1"])
    assert cfg["integrator"]["step"] == 0.002
    assert "est_eta1" in npz_table


def test_cli_run_uses_environment_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ADAPTIVE_TVOPT_OUT", str(tmp_path))
    assert run_cli(["run", "builtin:quad_si_central", "--t-end", "0.5", "--no-plot"]) == 0
    assert (tmp_path / "quad_si_central" / "trace.csv").exists()
    assert not (tmp_path / "quad_si_central" / "trace.svg").exists()


def test_cli_runtime_failure_exit_code(tmp_path):
    d = scenarios.quad_si_central()
    d["integrator"] = {"method": "explicit-euler", "step": 1.5, "t_end": 3000.0}
    assert run_cli(["run", str(_write(tmp_path, d)), "--out", str(tmp_path / "o"), "--no-plot"]) == 4


def test_cli_plot(tmp_path):
    out = tmp_path / "run"
    run_cli(["run", "builtin:quad_si_dist", "--out", str(out), "--t-end", "0.2", "--no-plot"])
    fig = tmp_path / "fig.svg"
    assert run_cli(["plot", str(out / "trace.csv"), "--out", str(fig)]) == 0
    text = fig.read_text()
    assert "<svg" in text and "<image" not in text
    assert run_cli(["plot", str(tmp_path / "nothing.csv")]) == 2
