import csv
import json

import pytest

from reactsim.cli import (
    EXIT_LEDGER, EXIT_OK, EXIT_PARSE, EXIT_USAGE, EXIT_VALIDATION, main,
)


@pytest.fixture
def workdir(tmp_path):
    assert main(["synth-trace", "two_phase", "--param", "p1=0.02", "--param", "t1=4",
                 "--param", "p2=0", "--param", "t2=4", "--out", str(tmp_path / "t.csv")]) == 0
    one = {"workload": {"kind": "DE"},
           "buffer": {"kind": "react", "preset": "reference", "name": "react"}}
    five = {"workload": {"kind": "DE"},
            "buffers": [{"kind": "static", "preset": "770uF"},
                        {"kind": "static", "preset": "10mF"},
                        {"kind": "static", "capacitance": 0.017, "rated_voltage": 5.5,
                         "name": "static_17mF"},
                        {"kind": "morphy", "preset": "reference"},
                        {"kind": "react", "preset": "reference"}]}
    (tmp_path / "one.json").write_text(json.dumps(one))
    (tmp_path / "five.json").write_text(json.dumps(five))
    return tmp_path


def test_run_writes_report(workdir, capsys):
    out = workdir / "r.json"
    rc = main(["run", "--config", str(workdir / "one.json"), "--trace", str(workdir / "t.csv"),
               "--out", str(out), "--waveform", str(workdir / "w.csv"), "--decimation", "10"])
    assert rc == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["name"] == "react" and rep["latency_to_first_on"] > 0
    header = (workdir / "w.csv").read_text().splitlines()[0]
    assert header == "time_s,v_last,power_in_w,gate_on,level,bank_modes"
    assert "latency_s" in capsys.readouterr().out


def test_run_output_is_byte_identical(workdir):
    args = ["run", "--config", str(workdir / "one.json"), "--trace", str(workdir / "t.csv"),
            "--seed", "4", "-q"]
    main(args + ["--out", str(workdir / "a.json"), "--waveform", str(workdir / "a.csv")])
    main(args + ["--out", str(workdir / "b.json"), "--waveform", str(workdir / "b.csv")])
    assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_missing_trace_names_path(workdir, capsys):
    rc = main(["run", "--config", str(workdir / "one.json"), "--trace", "nowhere.csv"])
    assert rc == EXIT_PARSE
    assert "nowhere.csv" in capsys.readouterr().err


def test_missing_config(workdir, capsys):
    assert main(["run", "--config", str(workdir / "none.json")]) == EXIT_PARSE
    assert "none.json" in capsys.readouterr().err


def test_bad_json(workdir):
    (workdir / "bad.json").write_text("{")
    assert main(["run", "--config", str(workdir / "bad.json")]) == EXIT_PARSE


def test_bad_trace_file(workdir):
    (workdir / "bad.csv").write_text("0,1\n1,-1\n")
    rc = main(["run", "--config", str(workdir / "one.json"), "--trace", str(workdir / "bad.csv")])
    assert rc == EXIT_PARSE


def test_threshold_violation(workdir, capsys):
    raw = {"thresholds": {"v_enable": 3.55}, "buffer": {"kind": "react", "preset": "reference"}}
    (workdir / "th.json").write_text(json.dumps(raw))
    rc = main(["run", "--config", str(workdir / "th.json"), "--trace", str(workdir / "t.csv")])
    assert rc == EXIT_VALIDATION
    assert "v_enable <= v_high" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["synth-trace", "constant", "--param", "power", "--out", "x.csv"]) == EXIT_USAGE


def test_compare_five_rows(workdir):
    out = workdir / "cmp.csv"
    rc = main(["compare", "--config", str(workdir / "five.json"),
               "--trace", str(workdir / "t.csv"), "--out", str(out), "-q"])
    assert rc == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 5
    for col in ("latency_to_first_on", "on_time_fraction", "completed", "failed",
                "ledger_harvested", "ledger_delivered_to_load", "ledger_residual"):
        assert col in rows[0]
    assert rows[4]["name"] == "react"


def test_compare_needs_two(workdir, capsys):
    rc = main(["compare", "--config", str(workdir / "one.json"), "--trace", str(workdir / "t.csv")])
    assert rc == EXIT_VALIDATION
    assert "compare requires ≥2 buffers" in capsys.readouterr().err


def test_compare_waveforms_per_buffer(workdir):
    main(["compare", "--config", str(workdir / "five.json"), "--trace", str(workdir / "t.csv"),
          "--out", str(workdir / "c.csv"), "--waveform", str(workdir / "w.csv"),
          "--decimation", "50", "-q"])
    assert (workdir / "w.4.react.csv").exists()


def test_ledger_failure_exit_code(workdir, monkeypatch):
    import reactsim.engine as engine

    def broken(*a, **k):
        raise engine.LedgerError("energy ledger imbalance")
    monkeypatch.setattr("reactsim.cli.simulate", broken)
    rc = main(["run", "--config", str(workdir / "one.json"), "--trace", str(workdir / "t.csv")])
    assert rc == EXIT_LEDGER


def test_synth_trace_validation(tmp_path):
    assert main(["synth-trace", "constant", "--param", "power=0.01",
                 "--out", str(tmp_path / "x.csv")]) == EXIT_VALIDATION


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "dissipated fraction: expected 0.25" in out
    assert "unit-capacitance limit N=3 (uF): expected 1680" in out
