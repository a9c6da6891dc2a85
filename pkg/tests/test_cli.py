import io
import json
import subprocess
import sys

import pytest

from tgvas.cli import render_text, run
from tgvas.fixtures import fixture_text


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name in ("running", "ack1", "ack2", "triv"):
        paths[name] = tmp_path / f"{name}.gvas"
        paths[name].write_text(fixture_text(name))
    paths["dir"] = tmp_path
    return paths


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def report(*argv):
    code, out, _ = call(*argv, "--json")
    return code, json.loads(out)


def test_analyze_reports_index_and_thinness(files):
    code, data = report("analyze", files["running"])
    assert code == 0 and data["verdict"] == "ok"
    text = json.dumps(data["artifacts"])
    assert "thin" in text


@pytest.mark.parametrize("command,s,t,verdict,code", [
    ("reach", 3, 6, "Yes", 0), ("reach", 3, 7, "No", 1),
    ("cover", 3, 5, "Yes", 0), ("cover", 0, 1, "No", 1)])
def test_search_verdicts_and_exit_codes(files, command, s, t, verdict, code):
    got, data = report(command, files["ack1"], "--source", s, "--target", t)
    assert (got, data["verdict"]) == (code, verdict)


def test_unknown_exits_with_two(files):
    code, data = report("reach", files["ack2"], "--source", 4, "--target", 9, "--max-steps", 5)
    assert code == 2 and data["verdict"] == "Unknown"


def test_usage_and_input_errors(files):
    assert call("reach", files["ack1"])[0] == 64
    assert call("frobnicate")[0] == 64
    assert call("reach", files["ack1"], "--source", "x", "--target", 1)[0] == 64
    assert call("reach", files["dir"] / "missing.gvas", "--source", 1, "--target", 1)[0] == 65
    assert call("reach", files["ack1"], "--source", "1,2", "--target", 1)[0] == 65
    bad = files["dir"] / "bad.gvas"
    bad.write_text("gvas 1\nstart S\nS -> S\n")
    assert call("analyze", bad)[0] == 65


def test_refinement_needs_one_dimension(files):
    grammar = files["dir"] / "plane.gvas"
    grammar.write_text("gvas 2\nstart S\nS -> 1 0\n")
    assert call("reach", grammar, "--source", "0,0", "--target", "1,0")[0] == 0
    code, _, err = call("pipeline", grammar, "--source", "0,0", "--target", "1,0")
    assert code == 65 and "one-dimensional" in err


def test_hilbert_command(files):
    system = files["dir"] / "sys.txt"
    system.write_text("1 -1 0 = 0\n0 1 -2 = 0\n")
    code, data = report("hilbert", system)
    assert code == 0 and data["artifacts"]["solutions"] == [[2, 2, 1]]
    system.write_text("1 1 = 2\n")
    assert report("hilbert", system)[1]["artifacts"]["solutions"] == [[0, 2], [1, 1], [2, 0]]


def test_json_and_text_carry_the_same_facts(files):
    argv = ("reach", files["ack1"], "--source", 3, "--target", 6, "--dump-tree")
    _, data = report(*argv)
    _, text, _ = call(*argv)
    assert sorted(text.splitlines()) == sorted(render_text(data).splitlines())
    assert f"tree_size: {data['artifacts']['tree_size']}" in text


def test_output_is_deterministic(files):
    argv = ("pipeline", files["ack2"], "--source", 2, "--target", 4, "--json", "--dump-klm")
    first = subprocess.run([sys.executable, "-m", "tgvas", *map(str, argv)], capture_output=True)
    second = subprocess.run([sys.executable, "-m", "tgvas", *map(str, argv)], capture_output=True,
                            env={"PYTHONHASHSEED": "12345"})
    assert first.returncode == 0
    assert first.stdout == second.stdout


def test_pipeline_then_certify(files):
    cert = files["dir"] / "cert.json"
    trace = files["dir"] / "trace.txt"
    code, data = report("pipeline", files["ack1"], "--source", 3, "--target", 6,
                        "--output", cert, "--trace", trace)
    assert code == 0 and data["artifacts"]["perfectness"]["perfect"]
    assert trace.read_text().startswith("Constr")
    code, data = report("certify", cert, files["ack1"], "--source", 3, "--target", 6)
    assert (code, data["verdict"]) == (0, "Accept")
    code, data = report("certify", cert, files["ack1"], "--source", 3, "--target", 7)
    assert (code, data["verdict"]) == (1, "Reject")


def test_tampered_certificate_is_rejected(files):
    cert = files["dir"] / "cert.json"
    call("pipeline", files["ack1"], "--source", 3, "--target", 6, "--output", cert)
    data = json.loads(cert.read_text())
    data["root"]["constraints"]["r_src"] = [7]
    cert.write_text(json.dumps(data))
    code, out = report("certify", cert, files["ack1"], "--source", 3, "--target", 7)
    assert (code, out["verdict"]) == (1, "Reject")
    cert.write_text("{not json")
    assert call("certify", cert, files["ack1"], "--source", 3, "--target", 6)[0] == 65
