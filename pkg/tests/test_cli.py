"""Command line interface: parsing, precedence, outputs, determinism."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from wsnsync import cli


def _run_args(out: Path, *extra: str) -> list[str]:
    # a fast configuration shared by most CLI tests
    return [
        "run", "--out-dir", str(out), "--topology", "line:3",
        "--duration", "300", "--boot-window", "60", "--seed", "1",
        *extra,
    ]


def _read_config_header(path: Path) -> dict:
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config = ")
    return json.loads(first[len("# config = "):])


# ---------------------------------------------------------------------------
# parsing helpers


def test_parse_seed_specs():
    assert cli._parse_seeds("7") == [7]
    assert cli._parse_seeds("1,2,5") == [1, 2, 5]
    assert cli._parse_seeds("3..6") == [3, 4, 5, 6]


def test_parse_seed_spec_errors():
    with pytest.raises(cli.ConfigError):
        cli._parse_seeds("6..3")
    with pytest.raises(cli.ConfigError):
        cli._parse_seeds("x")


def test_parse_topology_line_and_errors(tmp_path: Path):
    topo = cli._parse_topology("line:5")
    assert topo.node_ids == (1, 2, 3, 4, 5)
    with pytest.raises(cli.ConfigError):
        cli._parse_topology("line:1")
    with pytest.raises(cli.ConfigError):
        cli._parse_topology(str(tmp_path / "missing.json"))


def test_parse_topology_json_file(tmp_path: Path):
    spec = {"nodes": [1, 2, 3], "edges": [[1, 2], [2, 3]], "gateway": 2}
    path = tmp_path / "topo.json"
    path.write_text(json.dumps(spec))
    topo = cli._parse_topology(str(path))
    assert topo.gateway == 2
    assert topo.edges == ((1, 2), (2, 3))


# ---------------------------------------------------------------------------
# run command


def test_run_writes_traces_and_summary(tmp_path: Path, capsys):
    assert cli.main(_run_args(tmp_path)) == 0
    assert (tmp_path / "trace_newton_1.csv").exists()
    assert (tmp_path / "summary.csv").exists()
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[1] == ",".join(cli.SUMMARY_COLUMNS)
    assert lines[2].startswith("newton,1,")
    out = capsys.readouterr().out
    assert "protocol" in out and "conv_time_s" in out


def test_run_resolved_header_echoes_settings(tmp_path: Path):
    assert cli.main(_run_args(tmp_path, "--beacon-period", "20")) == 0
    cfg = _read_config_header(tmp_path / "summary.csv")
    assert cfg["beacon_period_s"] == 20.0
    assert cfg["protocols"] == ["newton"]
    assert cfg["seeds"] == [1]
    assert cfg["per_protocol_step_size"]["newton"] == 1.0


def test_flag_beats_config_file_beats_default(tmp_path: Path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"beacon_period_s": 15.0, "window": 3}))
    args = _run_args(tmp_path, "--config", str(conf),
                     "--beacon-period", "20")
    assert cli.main(args) == 0
    cfg = _read_config_header(tmp_path / "summary.csv")
    assert cfg["beacon_period_s"] == 20.0  # flag wins over file
    assert cfg["window"] == 3  # file wins over default
    assert cfg["nominal_hz"] == 1e6  # untouched default


def test_unknown_config_key_rejected(tmp_path: Path, capsys):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"beacon_perod_s": 15.0}))
    assert cli.main(_run_args(tmp_path, "--config", str(conf))) == 2
    assert "unknown config file keys" in capsys.readouterr().err


def test_invalid_values_exit_two(tmp_path: Path, capsys):
    assert cli.main(_run_args(tmp_path, "--beacon-period", "-5")) == 2
    assert cli.main(["run", "--out-dir", str(tmp_path), "--topology",
                     "line:zz"]) == 2
    assert cli.main(["run", "--out-dir", str(tmp_path), "--protocol",
                     "ntp"]) == 2


def test_out_of_bound_step_size_warns(tmp_path: Path, capsys):
    assert cli.main(_run_args(tmp_path, "--mu", "2.5")) == 0
    assert "outside the convergence bound" in capsys.readouterr().err


def test_out_dir_env_fallback(tmp_path: Path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("WSNSYNC_OUT_DIR", str(target))
    args = [a for a in _run_args(tmp_path) if a != str(tmp_path)]
    args.remove("--out-dir")
    assert cli.main(args) == 0
    assert (target / "summary.csv").exists()


def test_quantize_flag_recorded(tmp_path: Path):
    assert cli.main(_run_args(tmp_path, "--quantize-ticks")) == 0
    cfg = _read_config_header(tmp_path / "trace_newton_1.csv")
    assert cfg["quantize_ticks"] is True


def test_rerun_is_byte_identical(tmp_path: Path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(_run_args(d1, "--protocol", "newton,avgpisync")) == 0
    assert cli.main(_run_args(d2, "--protocol", "newton,avgpisync")) == 0
    for name in ("trace_newton_1.csv", "trace_avgpisync_1.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    assert (d1 / "summary.csv").read_bytes() == (d2 / "summary.csv").read_bytes()


def test_multiple_protocols_and_seeds(tmp_path: Path):
    args = _run_args(tmp_path, "--protocol", "newton,grades", "--seed",
                     "1..2")
    assert cli.main(args) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()[2:]
    assert len(rows) == 4
    assert (tmp_path / "trace_grades_2.csv").exists()


# ---------------------------------------------------------------------------
# validate-analysis command


def test_validate_analysis_writes_csv(tmp_path: Path, capsys):
    args = ["validate-analysis", "--out-dir", str(tmp_path),
            "--mu-grid", "1.0,2.2", "--oracle-runs", "2000",
            "--oracle-steps", "80", "--tail", "20"]
    assert cli.main(args) == 0
    out = capsys.readouterr().out
    assert "variant" in out and "disagrees" in out
    lines = (tmp_path / "analysis.csv").read_text().splitlines()
    assert lines[1] == ",".join(cli.ANALYSIS_COLUMNS)
    ok_row = lines[2].split(",")
    assert float(ok_row[0]) == 1.0
    assert float(ok_row[7]) < 0.1  # rel_err on the default parameter set
    divergent = lines[3].split(",")
    assert float(divergent[0]) == 2.2
    assert divergent[5] == divergent[6] == divergent[7] == ""


def test_validate_analysis_uses_worst_case_drift_default(tmp_path: Path):
    args = ["validate-analysis", "--out-dir", str(tmp_path),
            "--mu-grid", "1.0", "--oracle-runs", "500",
            "--oracle-steps", "40", "--tail", "10"]
    assert cli.main(args) == 0
    cfg = _read_config_header(tmp_path / "analysis.csv")
    assert cfg["f_max"] == 100.0


def test_validate_analysis_gate_failure_exits_nonzero(tmp_path: Path,
                                                      monkeypatch, capsys):
    monkeypatch.setattr(cli.analysis, "final_step_sigma",
                        lambda *a, **k: 9.9)
    args = ["validate-analysis", "--out-dir", str(tmp_path),
            "--mu-grid", "1.0", "--oracle-runs", "500",
            "--oracle-steps", "40", "--tail", "10"]
    assert cli.main(args) == 1
    assert "FAILED" in capsys.readouterr().err


def test_validate_analysis_rejects_bad_tail(tmp_path: Path):
    args = ["validate-analysis", "--out-dir", str(tmp_path),
            "--oracle-steps", "50", "--tail", "50"]
    assert cli.main(args) == 2


# ---------------------------------------------------------------------------
# sweep command


def test_sweep_over_nodes(tmp_path: Path):
    args = ["sweep", "--param", "nodes", "--values", "2,3",
            "--out-dir", str(tmp_path), "--duration", "300",
            "--boot-window", "60", "--seed", "1"]
    assert cli.main(args) == 0
    assert (tmp_path / "nodes_2" / "summary.csv").exists()
    assert (tmp_path / "nodes_3" / "summary.csv").exists()
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[1].startswith("param,value,protocol,")
    assert len(lines) == 4
    assert lines[2].startswith("nodes,2,newton,1,")


def test_sweep_rejects_unknown_param(tmp_path: Path, capsys):
    args = ["sweep", "--param", "voltage", "--values", "1",
            "--out-dir", str(tmp_path)]
    assert cli.main(args) == 2
    assert "unknown sweep parameter" in capsys.readouterr().err


def test_sweep_rejects_bad_values(tmp_path: Path):
    args = ["sweep", "--param", "mu", "--values", "a,b",
            "--out-dir", str(tmp_path)]
    assert cli.main(args) == 2
