import json
import os
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from scipy.special import logsumexp

from crisk.cli import EXIT_OK, EXIT_PROPERTY, EXIT_SOLVER, EXIT_VALIDATION, TOL_MULTIPLIERS, main, run

from conftest import ROOT

EXAMPLE = str(ROOT / "scenarios" / "four_atom.json")
REPORT_SCHEMA = json.loads((ROOT / "docs" / "report.schema.json").read_text())


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def scenario(**sections):
    base = {"atoms": [{"prob": 0.25}] * 4, "blocks": [[0, 1], [2, 3]]}
    base.update(sections)
    return base


def strip(doc):
    return {k: v for k, v in doc.items() if k != "timestamp"}


def test_eval_matches_closed_form():
    code, doc = run(["eval", "--scenario", EXAMPLE, "--measure", "entropic", "--position", "x"])
    assert code == EXIT_OK
    x = np.array([1.0, -1.0, 2.0, 0.0])
    want = [logsumexp(-x[:2], b=[0.5, 0.5]), logsumexp(-x[2:], b=[0.5, 0.5])]
    np.testing.assert_allclose(doc["result"]["value"], want, atol=1e-12)
    jsonschema.validate(doc, REPORT_SCHEMA)


def test_represent_then_attain():
    args = ["--scenario", EXAMPLE, "--measure", "entropic", "--position", "x"]
    code, rep = run(["represent"] + args)
    assert code == EXIT_OK and max(rep["result"]["gap"]) <= 1e-7
    code, att = run(["attain"] + args)
    assert code == EXIT_OK and all(att["result"]["attained"])


def test_conjugate_uses_position_as_dual():
    code, doc = run(["conjugate", "--scenario", EXAMPLE, "--measure", "entropic", "--position", "y"])
    assert code == EXIT_OK
    assert doc["result"]["value"][0] == pytest.approx(np.log(2.0))


def test_conjugate_infinite_is_encoded():
    code, doc = run(["conjugate", "--scenario", EXAMPLE, "--measure", "entropic", "--position", "x"])
    assert doc["result"]["value"] == ["+inf", "+inf"]


def test_axioms_deterministic():
    args = ["axioms", "--scenario", EXAMPLE, "--measure", "avar", "--trials", "1000", "--seed", "7"]
    a, b = run(args), run(args)
    assert a[0] == b[0] == EXIT_OK
    assert json.dumps(strip(a[1]), sort_keys=True) == json.dumps(strip(b[1]), sort_keys=True)


def test_tolerances_flow_from_tol():
    code, doc = run(["represent", "--scenario", EXAMPLE, "--measure", "worst", "--position", "x", "--tol", "1e-6"])
    eff = doc["tolerances"]["effective"]
    assert eff["represent_gap"] == pytest.approx(1e-6 * TOL_MULTIPLIERS["represent_gap"])
    assert doc["result"]["gap_tolerance"] == eff["represent_gap"]


def test_unknown_name_lists_available(capsys):
    code = main(["eval", "--scenario", EXAMPLE, "--measure", "nope", "--position", "x"])
    assert code == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "avar" in err and "entropic" in err


def test_missing_file():
    code, doc = run(["eval", "--scenario", "/nonexistent.json", "--measure", "a", "--position", "x"])
    assert code == EXIT_VALIDATION and doc["status"] == "validation_error"


def test_validation_error_names_field(tmp_path):
    bad = scenario()
    bad["atoms"] = [{"prob": 0.2}] * 4
    code, doc = run(["report", "--scenario", write(tmp_path, bad)])
    assert code == EXIT_VALIDATION and doc["error"]["field"] == "atoms.prob"


def test_solver_failure_exit(tmp_path):
    pen = {"kind": "penalty", "blocks": [
        {"pieces": [{"a": [0, 0], "c": 0}], "domain": [{"a": [1, 1], "b": 0.5}]},
        {"pieces": [{"a": [0, 0], "c": 0}]}]}
    path = write(tmp_path, scenario(measures={"p": pen}, positions={"x": [0, 0, 0, 0]}))
    code, doc = run(["eval", "--scenario", path, "--measure", "p", "--position", "x"])
    assert code == EXIT_SOLVER and doc["error"]["type"] == "InfeasibleError"


def test_bad_evaluator_shape_is_validation_error(tmp_path):
    path = write(tmp_path, scenario(measures={"c": {"kind": "custom", "callable": "user_measures:wrong_shape"}}))
    code, doc = run(["axioms", "--scenario", path, "--measure", "c", "--trials", "10"])
    assert code == EXIT_VALIDATION


def test_property_failure_exit(tmp_path):
    path = write(tmp_path, scenario(measures={"c": {"kind": "custom", "callable": "user_measures:neg_second_moment"}}))
    code, doc = run(["axioms", "--scenario", path, "--measure", "c", "--trials", "50"])
    assert code == EXIT_PROPERTY and doc["status"] == "property_failure"
    assert not doc["result"]["axioms"]["convexity"]["passed"]


def test_diagnostic_commands():
    code, doc = run(["james", "--scenario", EXAMPLE, "--polytope", "wedge", "--count", "20"])
    assert code == EXIT_OK and doc["result"]["verdict"] == "not_compact"
    code, doc = run(["james-perturbed", "--scenario", EXAMPLE, "--function", "capped", "--count", "5"])
    assert code == EXIT_OK and doc["result"]["consistent"]
    code, doc = run(["simons", "--scenario", EXAMPLE, "--sequence", "violating"])
    assert code == EXIT_OK and doc["result"]["verdict"] == "hypothesis_violation"
    code, doc = run(["fatou", "--scenario", EXAMPLE, "--measure", "worst", "--position", "y",
                     "--perturbation", "alternating"])
    assert code == EXIT_OK and doc["result"]["passed"]


def test_james_named_functionals():
    code, doc = run(["james", "--scenario", EXAMPLE, "--polytope", "square", "--functionals", "x,y"])
    assert code == EXIT_OK
    assert len(doc["result"]["blocks"][0]["results"]) == 2


class TestReport:
    def test_two_by_two_stable_order(self, tmp_path):
        data = scenario(measures={"w": {"kind": "worst_case"}, "e": {"kind": "entropic", "gamma": 0.5}},
                        positions={"b": [1, 2, 3, 4], "a": [0, -1, 1, 0]})
        code, doc = run(["report", "--scenario", write(tmp_path, data), "--trials", "50"])
        assert code == EXIT_OK
        pairs = [(it["measure"], it["position"]) for it in doc["result"]["items"]]
        assert pairs == [("w", "b"), ("w", "a"), ("e", "b"), ("e", "a")]
        jsonschema.validate(doc, REPORT_SCHEMA)
        for it in doc["result"]["items"]:
            jsonschema.validate(it, {"$ref": "#/$defs/reportItem", "$defs": REPORT_SCHEMA["$defs"]})

    def test_failing_custom_is_isolated(self, tmp_path):
        data = scenario(measures={"ok": {"kind": "avar", "lambda": 0.5},
                                  "bad": {"kind": "custom", "callable": "user_measures:broken"}},
                        positions={"x": [1, 2, 3, 4]})
        code, doc = run(["report", "--scenario", write(tmp_path, data), "--trials", "20"])
        assert code == EXIT_OK
        ok, bad = doc["result"]["items"]
        assert ok["ok"] and "error" not in ok
        assert bad["error"]["type"] == "RuntimeError" and not bad["ok"]
        assert doc["result"]["summary"] == {"items": 2, "errors": 1, "ok": 1}

    def test_empty_positions(self, tmp_path):
        code, doc = run(["report", "--scenario", write(tmp_path, scenario(measures={"w": {"kind": "worst_case"}}))])
        assert code == EXIT_OK and doc["result"]["items"] == []

    def test_threads_do_not_change_output(self, monkeypatch):
        args = ["report", "--scenario", EXAMPLE, "--trials", "100", "--seed", "3"]
        serial = run(args)[1]
        monkeypatch.setenv("CRISK_THREADS", "4")
        parallel = run(args)[1]
        assert json.dumps(strip(serial), sort_keys=True) == json.dumps(strip(parallel), sort_keys=True)


def test_output_file_and_table(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["eval", "--scenario", EXAMPLE, "--measure", "worst", "--position", "x", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["result"]["value"] == [1.0, 0.0]
    main(["eval", "--scenario", EXAMPLE, "--measure", "worst", "--position", "x", "--format", "table"])
    text = capsys.readouterr().out
    assert "result.value" in text and "[1.0, 0.0]" in text


def test_module_entry_point():
    env = dict(os.environ, PYTHONPATH=os.pathsep.join([str(ROOT / "src"), str(ROOT / "tests")]))
    proc = subprocess.run([sys.executable, "-m", "crisk", "eval", "--scenario", EXAMPLE, "--measure", "avar",
                           "--position", "x"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
