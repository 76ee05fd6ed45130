import json

import pytest

from bilbyafs import codec
from bilbyafs.cli import main, pending2_fixture

SCRIPT = "create / a 1a4\ncreate / b 1a4\nlookup / a\nunlink / a\nfsync\n"


@pytest.fixture
def script(tmp_path):
    p = tmp_path / "s.script"
    p.write_text(SCRIPT)
    return p


def test_run_then_check(tmp_path, script, capsys):
    trace = tmp_path / "t.trace"
    assert main(["run", str(script), "--trace", str(trace)]) == 0
    assert trace.read_text().startswith(codec.TRACE_HEADER + "\n")
    assert main(["check", str(trace)]) == 0
    assert "5 steps: pass" in capsys.readouterr().out


def test_run_to_stdout_with_schedule(tmp_path, script, capsys):
    sched = tmp_path / "s.schedule"
    sched.write_text("allocfail\nok\nfail EIO 0\n")
    assert main(["run", str(script), "--schedule", str(sched), "--capacity", "2"]) == 0
    out = capsys.readouterr()
    trace = codec.parse_trace(out.out)
    assert [s.output.result.code.name for s in trace.steps if hasattr(s.output.result, "code")] \
        == ["ENOMEM", "ENOENT", "ENOENT", "EIO"]
    assert "pass" in out.err


def test_tampered_trace_fails(tmp_path, script, capsys):
    trace = tmp_path / "t.trace"
    main(["run", str(script), "--trace", str(trace)])
    text = trace.read_text().replace('"readonly":false', '"readonly":true', 1)
    trace.write_text(text)
    assert main(["check", str(trace)]) == 1
    out = capsys.readouterr().out
    assert "fail at step" in out and "step 0" in out


def test_enumerate_fsync_pending2(capsys):
    assert main(["enumerate", "fsync", "--fixture", "pending2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1] == "9 outcomes"
    outcomes = [json.loads(line) for line in lines[:-1]]
    assert len(outcomes) == 9
    for o in outcomes:
        if o["result"] == {"error": "EIO"}:
            assert o["state"]["readonly"]


def test_enumerate_create_is_truncated(capsys):
    assert main(["enumerate", "create", "/", "jiggle", "--budget", "2"]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "19 outcomes (truncated)"


def test_enumerate_from_state_file(tmp_path, capsys):
    p = tmp_path / "state.json"
    p.write_text(codec.state_text(pending2_fixture()))
    assert main(["enumerate", "lookup", "/", "a", "--state", str(p)]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "3 outcomes"


def test_fuzz_writes_summary(tmp_path, capsys):
    out = tmp_path / "fz"
    assert main(["fuzz", "--seed", "3", "--n", "20", "--out", str(out)]) == 0
    text = (out / "summary.txt").read_text()
    assert text == capsys.readouterr().out
    assert text.endswith("PASS 20/20\n")


def test_explore(capsys):
    assert main(["explore", "--depth", "1"]) == 0
    assert "states 17" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["run", "/nonexistent/script"],
    ["fuzz", "--capacities", "1,x"],
    ["fuzz", "--n", "-3"],
    ["enumerate", "create", "/"],
    ["enumerate", "fsync", "extra"],
    ["enumerate", "lookup", "/nope", "a"],
    ["explore", "--samples", "0"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_bad_script_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.script"
    p.write_text("fsync\nfrobnicate\n")
    assert main(["run", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_malformed_trace(tmp_path):
    p = tmp_path / "x.trace"
    p.write_text("not a trace\n")
    assert main(["check", str(p)]) == 2
