from __future__ import annotations

import json
import os

import pytest

from conftest import corpus_path
from tntprove.cli import CSV_HEADER, REPORT_VERSION, main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_prove_drift_exit_one_and_text_report(capsys):
    code, out, _ = _run(capsys, "prove", corpus_path("drift"), "--seed", "1")
    assert code == 1
    assert "verdict: nonterm" in out
    assert "x >= 0 && y >= 0" in out


def test_prove_json_report_schema(capsys):
    code, out, _ = _run(capsys, "prove", corpus_path("sqrt1_term"), "--seed", "1", "--report", "json")
    assert code == 0
    rep = json.loads(out)
    assert rep["version"] == REPORT_VERSION
    assert rep["verdict"] == "term" and rep["seed"] == 1
    assert set(rep["timings"]) == {"learn_s", "validate_s", "total_s"}
    rfs = rep["evidence"]["ranking_functions"]["0"]
    assert {"coeffs": {"k": 1, "c": -1}, "constant": 0} in rfs


def test_json_report_is_deterministic_apart_from_timings(capsys):
    reps = []
    for _ in range(2):
        _, out, _ = _run(capsys, "prove", corpus_path("quadratic_bound"), "--seed", "2", "--report", "json")
        rep = json.loads(out)
        rep.pop("timings")
        reps.append(rep)
    assert reps[0] == reps[1]


def test_malformed_and_missing_files_exit_three(capsys, tmp_path):
    bad = tmp_path / "bad.imp"
    bad.write_text("fun f(x) { while (x > 0) { x = x - 1; }")
    code, _, err = _run(capsys, "prove", str(bad))
    assert code == 3 and "error" in err
    code, _, _ = _run(capsys, "prove", str(tmp_path / "missing.imp"))
    assert code == 3


def test_invalid_flag_value_exits_three(capsys):
    code, _, err = _run(capsys, "prove", corpus_path("countdown"), "--bnd", "0")
    assert code == 3 and "bnd" in err


def test_unknown_exit_two(capsys):
    code, out, _ = _run(capsys, "prove", corpus_path("up_forever"), "--mode", "term", "--seed", "1")
    assert code == 2 and "verdict: unknown" in out


def test_check_agrees_and_detects_tampering(capsys, tmp_path):
    for name in ("drift", "sqrt1_term"):
        _, out, _ = _run(capsys, "prove", corpus_path(name), "--seed", "1", "--report", "json")
        path = tmp_path / f"{name}.json"
        path.write_text(out)
        code, out2, _ = _run(capsys, "check", str(path))
        assert code == 0 and out2.startswith("agree")
    rep = json.loads((tmp_path / "drift.json").read_text())
    rep["evidence"]["recurrent_set"] = [a for a in rep["evidence"]["recurrent_set"] if a["text"] != "y >= 0"]
    (tmp_path / "bad.json").write_text(json.dumps(rep))
    code, out, _ = _run(capsys, "check", str(tmp_path / "bad.json"))
    assert code == 1 and "disagree" in out
    rep = json.loads((tmp_path / "sqrt1_term.json").read_text())
    rep["evidence"]["ranking_functions"]["0"] = [{"coeffs": {"k": 1}, "constant": 0}]
    (tmp_path / "bad2.json").write_text(json.dumps(rep))
    code, _, _ = _run(capsys, "check", str(tmp_path / "bad2.json"))
    assert code == 1


def test_bench_rows_and_errors(capsys, tmp_path):
    (tmp_path / "b.imp").write_text(open(corpus_path("countdown")).read())
    (tmp_path / "a.imp").write_text("fun broken(")
    (tmp_path / "notes.txt").write_text("ignored")
    code, out, _ = _run(capsys, "bench", str(tmp_path), "--seed", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == CSV_HEADER
    assert [ln.split(",")[0] for ln in lines[1:]] == ["a.imp", "b.imp"]
    assert lines[1].split(",")[1] == "error"
    assert lines[2].split(",")[1:3] == ["term", "symbolic"]


def test_bench_empty_dir_is_header_only(capsys, tmp_path):
    code, out, _ = _run(capsys, "bench", str(tmp_path))
    assert code == 0 and out == CSV_HEADER + "\n"


def test_bench_timeout_row(capsys, tmp_path):
    # the inner loop makes every run long; a tiny timeout must cut the analysis off
    (tmp_path / "slow.imp").write_text(open(corpus_path("nested")).read())
    code, out, _ = _run(capsys, "bench", str(tmp_path), "--timeout", "1")
    row = out.splitlines()[1].split(",")
    assert row[1] == "unknown"
    assert float(row[5]) < 10


def test_bench_parallel_matches_serial(capsys, tmp_path):
    for name in ("countdown", "drift", "nonzero"):
        (tmp_path / f"{name}.imp").write_text(open(corpus_path(name)).read())
    _, serial, _ = _run(capsys, "bench", str(tmp_path), "--seed", "1")
    _, par, _ = _run(capsys, "bench", str(tmp_path), "--seed", "1", "--jobs", "2")

    def strip(text):
        return [ln.split(",")[:3] + ln.split(",")[6:] for ln in text.splitlines()]

    assert strip(serial) == strip(par)


def test_trace_minimal_loop_and_determinism(capsys, tmp_path):
    f = tmp_path / "m.imp"
    f.write_text("fun m() { int x = -1; while (x >= 0) { x = x - 1; } }")
    code, out, _ = _run(capsys, "trace", str(f), "--inputs", "1")
    assert code == 0
    assert out.splitlines() == ["loop=0 pos=pre seq=0 x=-1", "loop=0 pos=post seq=1 x=-1"]
    _, a, _ = _run(capsys, "trace", corpus_path("drift"), "--inputs", "1", "--seed", "7")
    _, b, _ = _run(capsys, "trace", corpus_path("drift"), "--inputs", "1", "--seed", "7")
    assert a == b and a


def test_trace_nonterm_fixture_has_bnd_body_lines(capsys):
    _, out, _ = _run(capsys, "trace", corpus_path("sqrt1_nonterm"), "--inputs", "1")
    assert sum(" pos=body " in ln for ln in out.splitlines()) == 500


def test_emit_smt_writes_obligations(capsys, tmp_path):
    d = tmp_path / "smt"
    code, _, _ = _run(capsys, "prove", corpus_path("drift"), "--seed", "1", "--emit-smt", str(d))
    assert code == 1
    files = sorted(os.listdir(d))
    assert files and all(f.endswith(".smt2") for f in files)
    assert "(check-sat)" in (d / files[0]).read_text()


@pytest.mark.parametrize("argv", [[], ["prove"], ["prove", "x.imp", "--mode", "sideways"]])
def test_usage_errors_exit_three(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 3
