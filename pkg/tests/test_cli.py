import csv
import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pregularity import report as rpt
from pregularity.cli import argv_from_config, main, run


@pytest.mark.parametrize("argv, code", [
    (["analyze", "--builtin", "ex1"], 0),
    (["pfnewton", "--builtin", "ex1", "--h=1,-1", "--x0=0.05,0.03"], 0),
    (["newton", "--builtin", "ex1", "--x0=0.3,0.3"], 3),
    (["list"], 0),
    (["frobnicate"], 2),
    (["analyze"], 2),
    (["analyze", "--builtin", "ex1", "--x0=1,,2"], 2),
    (["analyze", "--builtin", "nosuch"], 4),
    (["newton", "--builtin", "ex1", "--x0=1,2,3"], 4),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code


def test_malformed_problem_file_exits_4(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"variables": ["x1"], "equations": ["x1 +"]}')
    assert main(["analyze", "--problem", str(path)]) == 4
    assert "problem error" in capsys.readouterr().err


def test_json_output_parses(capsys):
    assert main(["pfnewton", "--builtin", "ex1", "--h=1,-1", "--x0=0.05,0.03"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["command"] == "pfnewton" and data["exit_code"] == 0


def test_newton_rejection_report():
    report, code = run(["newton", "--builtin", "ex1", "--x0=1e-5+1e-15,1e-5", "--max-iter", "1"])
    x1 = report["solve"]["history"][1]["x"]
    assert math.hypot(*x1) == pytest.approx(1.414e5, rel=1e-3)


def test_analyze_eq20a_alias():
    report, code = run(["analyze", "--builtin", "eq20a_F"])
    assert code == 0
    assert report["decomposition"]["p"] == 2
    assert report["hp"]["count"] == 4


def test_determinism_and_config_echo():
    argv = ["tangent", "--builtin", "eq20a", "--seed", "4"]
    a, _ = run(argv)
    b, _ = run(argv)
    assert rpt.payload_bytes(a) == rpt.payload_bytes(b)
    c, _ = run(argv_from_config(dict(command=a["command"], **a["config"])))
    assert rpt.payload_bytes(c) == rpt.payload_bytes(a)


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("PFACTOR_SEED", "17")
    report, _ = run(["analyze", "--builtin", "ex1"])
    assert report["config"]["seed"] == 17
    report, _ = run(["analyze", "--builtin", "ex1", "--seed", "3"])
    assert report["config"]["seed"] == 3
    monkeypatch.delenv("PFACTOR_SEED")
    assert run(["analyze", "--builtin", "ex1"])[0]["config"]["seed"] == 0


def test_bad_env_seed_is_usage_error(monkeypatch, capsys):
    monkeypatch.setenv("PFACTOR_SEED", "abc")
    assert main(["analyze", "--builtin", "ex1"]) == 2


def test_table_and_csv(capsys):
    argv = ["pfnewton", "--builtin", "ex1", "--h=1,-1"]
    assert main(argv + ["--format", "table"]) == 0
    table = capsys.readouterr().out
    assert "command: pfnewton" in table
    assert main(argv + ["--format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][:3] == ["history", "k", "residual"]
    assert [r[1] for r in rows[1:]] == [str(k) for k in range(len(rows) - 1)]


def test_output_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["list", "--output", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert len(json.loads(out.read_text())["problems"]) == 6


def test_timings_are_dropped_from_payload():
    report, _ = run(["list"])
    assert rpt.TIMINGS in report
    assert rpt.TIMINGS not in rpt.payload(report)


@pytest.mark.parametrize("x, text", [
    (0.1, "0.10000000000000001"),
    (1.0, "1.0"),
    (-2.5e-20, "-2.4999999999999999e-20"),
    (math.inf, "inf"),
    (-math.inf, "-inf"),
    (math.nan, "nan"),
])
def test_format_float(x, text):
    assert rpt.format_float(x) == text


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trips(x):
    assert float(rpt.format_float(x)) == x


def test_dumps_round_trips_floats():
    data = {"a": [0.1, 1 / 3, 1e300], "b": {"c": 2, "d": None, "e": True}}
    assert rpt.loads(rpt.dumps(data)) == data


def test_non_finite_floats_are_strings():
    assert rpt.loads(rpt.dumps({"x": math.inf}))["x"] == "inf"
