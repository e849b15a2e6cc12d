import io
import json

import numpy as np
import pytest

from mfac import PGVector, export_csv, import_csv, lambda_sweep, load_scenario, run
from mfac.analysis import write_sweep_csv
from mfac.cli import format_analysis, main, parse_grid

EX2 = "--pg=-0.8,-0.5,-0.2"


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    assert "example2" in capsys.readouterr().out.split()


def test_simulate_builtin(tmp_path, capsys):
    out = tmp_path / "ex2.csv"
    assert main(["simulate", "example2", "-o", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["schema"] == "mfac.summary/1"
    assert summary["status"] == "completed" and summary["rows"] == 700
    tr = import_csv(out)
    assert len(tr) == 700
    assert tr == run(load_scenario("example2"))
    assert summary["static_error"] == pytest.approx(1.0286, rel=1e-2)


def test_simulate_missing_file(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.yaml"), "-o", str(tmp_path / "x.csv")]) == 4


def test_simulate_config_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\nhorizon: 5\n")
    assert main(["simulate", str(bad), "-o", str(tmp_path / "x.csv")]) == 2


def test_simulate_divergence_keeps_partial_trace(tmp_path, capsys):
    sc = tmp_path / "div.yaml"
    sc.write_text(
        "name: runaway\nhorizon: 500\n"
        "plant: {name: arx, params: {a: [0.0], b: [1.0, 2.0]}}\n"
        "trajectory: {kind: constant, params: {value: 1.0}}\n"
        "controller: {lambda: 0.0, ly: 1, lu: 2, pg_source: known, known_pg: [0.0, 1.0, 2.0]}\n")
    out = tmp_path / "div.csv"
    assert main(["simulate", str(sc), "-o", str(out)]) == 3
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["status"] == "diverged"
    assert 0 < len(import_csv(out)) < 500


def test_analyze_poles_matches_library(capsys):
    assert main(["analyze-poles", EX2, "--lambda", "0.2"]) == 0
    out = capsys.readouterr().out
    assert out.strip() == format_analysis(PGVector.from_list([-0.8, -0.5, -0.2], 1), 0.2, 1.0)
    assert "0.5333333333" in out and "-0.6666666667" in out
    assert "predicted ramp error: 1.028571429" in out
    assert "verdict: stable" in out


def test_analyze_zero_lambda(capsys):
    assert main(["analyze-poles", EX2, "--lambda", "0"]) == 0
    assert "predicted ramp error: 0\n" in capsys.readouterr().out


def test_sweep_matches_library(capsys):
    assert main(["sweep-lambda", EX2, "--grid", "0:0.1:1"]) == 0
    out = capsys.readouterr().out
    buf = io.StringIO()
    write_sweep_csv(lambda_sweep(PGVector.from_list([-0.8, -0.5, -0.2], 1),
                                 parse_grid("0:0.1:1")), buf)
    assert out == buf.getvalue()
    assert len(out.strip().split("\n")) == 12


def test_sweep_to_file_and_list_grid(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep-lambda", EX2, "--grid", "0,0.2", "-o", str(out)]) == 0
    rows = out.read_text().strip().split("\n")
    assert len(rows) == 3 and rows[2].startswith("0.20000000000000001,0.666")


def test_analyze_with_grid_prints_sweep(capsys):
    assert main(["analyze-poles", EX2, "--grid", "0:0.5:1"]) == 0
    assert capsys.readouterr().out.startswith("lambda,spectral_radius,verdict,ramp_error\n")


def test_parse_grid():
    assert len(parse_grid("0:0.1:1")) == 11
    np.testing.assert_allclose(parse_grid("0.5:0.25:1"), [0.5, 0.75, 1.0])
    assert parse_grid("1,2") == [1.0, 2.0]


def test_analyze_bad_input():
    assert main(["analyze-poles", "--pg=-0.8,x", "--lambda", "0.2"]) == 2
    assert main(["sweep-lambda", EX2, "--grid", "1:0.1:0"]) == 2


def test_static_error(capsys):
    assert main(["analyze-static-error", EX2, "--lambda", "0.2"]) == 0
    assert capsys.readouterr().out == "static error: 1.028571429\n"
    assert main(["analyze-static-error", EX2, "--lambda", "0.5", "--n", "2"]) == 0
    assert capsys.readouterr().out == "static error: divergent\n"
    assert main(["analyze-static-error", EX2, "--lambda", "0", "--n", "3"]) == 0
    assert capsys.readouterr().out == "static error: 0\n"


def test_emit_plot(tmp_path):
    trace = tmp_path / "runs" / "case2.csv"
    trace.parent.mkdir()
    export_csv(run(load_scenario("example1_case2")), trace)
    script = tmp_path / "plots" / "case2.py"
    assert main(["emit-plot", str(trace), "-o", str(script)]) == 0
    text = script.read_text()
    compile(text, str(script), "exec")
    assert "'../runs/case2.csv'" in text and "PG_ONLY = False" in text
    assert main(["emit-plot", str(trace), "-o", str(script), "--pg-only"]) == 0
    assert "PG_ONLY = True" in script.read_text()


def test_emit_plot_rejects_empty_or_malformed(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("k,y_star,y,u,e,phi_1\n")
    assert main(["emit-plot", str(empty)]) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("k,y,u\n1,2,3\n")
    assert main(["emit-plot", str(bad)]) == 4
