import json
import pathlib

import pytest
from gmpy2 import mpq

from cotstar import cli
from cotstar import geometry as geo
from cotstar.calculus_ops import Calculus
from cotstar.cli import SceneError, main, parse_report, parse_scene, render_report, run, table_to_phase
from cotstar.fedosov_engine import phase

SCENES = pathlib.Path(__file__).resolve().parent.parent / "scripts" / "scenes"


def write(tmp_path, text, name="scene.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_minimal_flat_scene_parses():
    sc = parse_scene("dimension: 1\nlambda_order: 2\ngeometry: {kind: flat}\n"
                     "tasks:\n  - {command: star, mode: weyl, f: [{p_index: [1], value: 1}],"
                     " g: [{q_index: [1], value: 1}]}\n")
    assert sc.n == 1 and sc.lambda_order == 2 and len(sc.tasks) == 1
    report, ok = run(sc)
    assert ok
    rows = report["tasks"][0]["result"]["terms"]
    # p *_W q = pq + lambda/2i
    assert {(r["lambda_power"], r["re"], r["im"]) for r in rows} == {(0, "1", "0"), (1, "0", "-1/2")}


def test_standard_example_has_three_oracle_terms(capsys):
    assert main(["star", "--scene", str(SCENES / "flat_standard.yaml")]) == 0
    rep = parse_report(capsys.readouterr().out)
    rows = rep["tasks"][0]["result"]["terms"]
    got = {(r["lambda_power"], tuple(r["p_index"]), tuple(r["q_index"]), r["re"], r["im"]) for r in rows}
    assert got == {(0, (2,), (2,), "1", "0"), (1, (1,), (1,), "0", "-4"), (2, (0,), (0,), "-2", "0")}


def test_m2_compare_nonzero(capsys):
    assert main(["m2-compare", "--scene", str(SCENES / "s2_m2.yaml")]) == 0
    rep = parse_report(capsys.readouterr().out)
    diff = rep["tasks"][0]["difference"]["terms"]
    at0 = [r for r in diff if r["q_index"] == [0, 0]]
    assert at0 and at0[0]["re"] == "-4"


def test_lie_scene(capsys):
    assert main(["run", "--scene", str(SCENES / "heisenberg.yaml")]) == 0
    rep = parse_report(capsys.readouterr().out)
    assert rep["status"] == "pass" and len(rep["tasks"]) == 5


def test_selftest_flat_passes(capsys):
    assert main(["selftest"]) == 0
    rep = parse_report(capsys.readouterr().out)
    verdicts = rep["tasks"][0]["verdicts"]
    assert len(verdicts) > 20 and all(v["passed"] for v in verdicts)


@pytest.mark.parametrize("out", ["text", "json-like"])
def test_report_is_deterministic(capsys, out):
    args = ["run", "--scene", str(SCENES / "s2_m2.yaml"), "--output", out]
    main(args)
    a = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == a
    if out == "json-like":
        json.loads(a)


def test_json_field_names(capsys):
    main(["star", "--scene", str(SCENES / "flat_standard.yaml"), "--output", "json-like"])
    rep = json.loads(capsys.readouterr().out)
    row = rep["tasks"][0]["result"]["terms"][0]
    assert set(row) == {"lambda_power", "p_index", "q_index", "re", "im"}


def test_round_trip_through_operand(tmp_path, capsys):
    c = geo.sphere_stereographic(7)
    C = Calculus(c, lambda_order=2)
    f = phase(C.chart, {(0, (1, 0, 1, 0)): 1, (0, (0, 1, 0, 1)): (mpq(2, 3), 1)})
    h = phase(C.chart, {(0, (0, 0, 1, 1)): 1})
    want = C.star("standard", f, h)
    rows = cli.table_of(want)
    assert table_to_phase(rows, 2, 7).terms == want.terms
    # re-ingest the computed value as an operand and multiply by 1
    doc = {"name": "rt", "geometry": {"kind": "builtin", "name": "s2"},
           "truncation": {"lambda_order": 2, "jet_order": 7},
           "tasks": [{"command": "star", "mode": "standard", "f": rows,
                      "g": [{"value": "1"}]}]}
    path = write(tmp_path, json.dumps(doc))
    assert main(["star", "--scene", path]) == 0
    back = parse_report(capsys.readouterr().out)["tasks"][0]["result"]["terms"]
    assert table_to_phase(back, 2, 7).terms == want.terms


def test_out_file(tmp_path, capsys):
    dest = tmp_path / "r.txt"
    assert main(["star", "--scene", str(SCENES / "flat_standard.yaml"), "--out", str(dest)]) == 0
    assert capsys.readouterr().out == ""
    assert parse_report(dest.read_text())["status"] == "pass"


def test_syntax_error_is_positioned(tmp_path, capsys):
    path = write(tmp_path, "name: x\ngeometry: {kind: flat, n: 2\ntasks: []\n")
    assert main(["run", "--scene", path]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err
    with pytest.raises(SceneError, match="line 3"):
        parse_scene("name: x\ngeometry: {kind: flat, n: 2\ntasks: []\n")


def test_input_errors_exit_2(tmp_path, capsys, monkeypatch):
    assert main(["run"]) == 2
    assert main(["run", "--scene", str(tmp_path / "missing.yaml")]) == 2
    bad = write(tmp_path, "geometry: {kind: lie, n: 3, constants: {'2,0,1': 1, '0,0,2': 1}}\n")
    assert main(["run", "--scene", bad]) == 2
    assert "(0, 1, 2)" in capsys.readouterr().err
    dims = write(tmp_path, "geometry: {kind: flat, n: 2}\ntasks:\n"
                           "  - {command: star, f: [{p_index: [1], value: 1}], g: [{value: 1}]}\n", "d.yaml")
    assert main(["run", "--scene", dims]) == 2
    monkeypatch.setenv("FORGE_CAP_GUARD", "sometimes")
    assert main(["selftest"]) == 2


def test_jet_budget_guard(tmp_path, monkeypatch):
    text = "geometry: {kind: builtin, name: s2}\ntruncation: {lambda_order: 2, jet_order: 5}\n"
    with pytest.raises(SceneError, match="below the minimum 7"):
        parse_scene(text)
    assert parse_scene(text, strict=False).jet_order == 5
    path = write(tmp_path, text)
    assert main(["run", "--scene", path]) == 2
    monkeypatch.setenv("FORGE_CAP_GUARD", "permissive")
    assert main(["run", "--scene", path]) == 0


def test_order_override(tmp_path, capsys):
    path = write(tmp_path, "geometry: {kind: flat, n: 1}\ntasks:\n"
                           "  - {command: star, mode: standard, f: [{p_index: [2], value: 1}],"
                           " g: [{q_index: [2], value: 1}]}\n")
    assert main(["star", "--scene", path, "--order", "1"]) == 0
    rows = parse_report(capsys.readouterr().out)["tasks"][0]["result"]["terms"]
    assert max(r["lambda_power"] for r in rows) == 1


def test_failed_verdict_exits_1(monkeypatch, capsys):
    real = cli.Runner.run_task

    def broken(self, i, task):
        out, _ = real(self, i, task)
        return out, False

    monkeypatch.setattr(cli.Runner, "run_task", broken)
    assert main(["selftest"]) == 1
    assert parse_report(capsys.readouterr().out)["status"] == "fail"


def test_render_round_trips():
    report, _ = run(parse_scene((SCENES / "flat_standard.yaml").read_text()))
    for out in ("text", "json-like"):
        assert parse_report(render_report(report, out)) == report
