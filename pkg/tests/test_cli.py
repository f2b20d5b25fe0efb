from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from ncspectral import cli

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_csv_json_round_trip(capsys):
    cfg = str(CONFIGS / "conformal2.yaml")
    code, js, _ = run(["curvature", "--config", cfg, "--format", "json"], capsys)
    assert code == 0
    code, cs, _ = run(["curvature", "--config", cfg, "--format", "csv"], capsys)
    assert code == 0
    rows_j = json.loads(js)["rows"]
    rows_c = cli.parse_csv(cs)
    assert len(rows_j) == len(rows_c) > 0
    assert rows_j == rows_c


def test_csv_header_versioned(capsys):
    _, cs, _ = run(["curvature", "--config", str(CONFIGS / "twisted.yaml"), "--format", "csv"], capsys)
    lines = cs.splitlines()
    assert lines[0] == cli.CSV_VERSION
    assert lines[1] == ",".join(cli.CSV_HEADER)


def test_deterministic_bytes(capsys):
    args = ["curvature", "--config", str(CONFIGS / "conformal2.yaml"), "--seed", "5"]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    assert a == b
    _, c, _ = run(args[:-1] + ["6"], capsys)
    assert a != c  # random points move with the seed


def test_engine_matches_closed_form_in_report(capsys):
    for name in ("conformal2.yaml", "twisted.yaml"):
        _, js, _ = run(["curvature", "--config", str(CONFIGS / name)], capsys)
        deltas = [r["delta"] for r in json.loads(js)["rows"] if r["delta"] is not None]
        assert deltas and max(deltas) < 1e-8


def test_tfunc_methods_side_by_side(capsys):
    code, js, _ = run(["tfunc", "--config", str(CONFIGS / "tfunc_general.yaml")], capsys)
    assert code == 0
    rows = json.loads(js)["rows"]
    methods = {r["method"] for r in rows if r["quantity"] == "T"}
    assert methods == {"quadrature", "dim2"}
    assert max(r["delta"] for r in rows if r["method"] == "dim2") < 1e-10
    assert {r["branch"] for r in rows if r["method"] == "dim2"} == {"a<0", "a=0"}


def test_tfunc_conformal_closed_form(tmp_path, capsys):
    cfg = write(tmp_path, {"metric": {"family": "conformal", "f": "exp(t)", "dim": 3},
                           "tfunc": {"alpha": [2, 1, 1], "n": [0, 0, 1, 1], "points": [[0.1, -0.4, 0.6]]}})
    _, js, _ = run(["tfunc", "--config", cfg], capsys)
    rows = json.loads(js)["rows"]
    closed = [r for r in rows if r["method"] == "closed-form"]
    assert len(closed) == 1 and closed[0]["delta"] < 1e-10 and closed[0]["branch"] == "power"


def test_doubly_twisted_dt4_rows(tmp_path, capsys):
    cfg = write(tmp_path, {"metric": {"family": "doubly_twisted", "f": "exp(t)", "ft": "exp(-t) + 1",
                                      "g": [[1, 0], [0, 1]], "gt": [[1.5, 0.2], [0.2, 1]]},
                           "tfunc": {"alpha": [1, 1], "points": [[0.2, -0.3]]},
                           "curvature": {"points": [[0.2, -0.3, 0.5]], "quantities": ["F_S"]}})
    _, js, _ = run(["tfunc", "--config", cfg], capsys)
    rows = json.loads(js)["rows"]
    dt4 = [r for r in rows if r["method"] == "dt4"]
    assert len(dt4) == 1 and dt4[0]["delta"] < 1e-10
    _, js, _ = run(["curvature", "--config", cfg], capsys)
    assert {r["method"] for r in json.loads(js)["rows"]} == {"dt4"}


def test_verify_reports_and_exit_codes(tmp_path, capsys):
    cfg = write(tmp_path, {"verify": {"criteria": [5]}})
    code, js, err = run(["verify", "--config", cfg], capsys)
    rep = json.loads(js)
    assert code == 0 and rep["passed"] and rep["schema"] == cli.SCHEMA
    assert rep["checks"][0]["tolerance"] == 1e-8 and "observed" in rep["checks"][0]
    assert "[PASS]  5" in err
    bad = write(tmp_path, {"verify": {"criteria": [9], "fault": "sign_flip", "options": {9: {"points": 1}}}}, "bad.yaml")
    code, _, err = run(["verify", "--config", bad, "--format", "csv"], capsys)
    assert code == 1 and "[FAIL]  9" in err


def test_out_file(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, stdout, _ = run(["curvature", "--config", str(CONFIGS / "twisted.yaml"), "--format", "csv",
                           "--out", str(out)], capsys)
    assert code == 0 and stdout == ""
    assert out.read_text().startswith(cli.CSV_VERSION)


@pytest.mark.parametrize("data,msg", [
    ({"metric": {"family": "conformal", "f": "exp(t)", "dim": 2}, "bogus": 1}, "unknown config keys"),
    ({"metric": {"family": "spherical"}, "curvature": {"points": [[0, 0, 0]]}}, "unknown metric family"),
    ({"metric": {"family": "conformal", "f": "exp(t)", "dim": 2}}, "no evaluation points"),
    ({"metric": {"family": "general", "entries": [["t", 0], [0, 1]]}, "curvature": {"points": [[0, 0, 0]]}},
     "positive definite"),
    ({"metric": {"family": "conformal", "f": "sin(t)", "dim": 2}, "curvature": {"points": [[0, 0, 0]]}},
     "invalid metric"),
])
def test_config_errors(tmp_path, capsys, data, msg):
    code, _, err = run(["curvature", "--config", write(tmp_path, data)], capsys)
    assert code == 2 and msg in err


def test_verify_config_errors(tmp_path, capsys):
    for data in ({"verify": {"criteria": [42]}}, {"verify": {"fault": "x"}},
                 {"verify": {"options": {5: {"nope": 1}}}}):
        code, _, err = run(["verify", "--config", write(tmp_path, data)], capsys)
        assert code == 2 and "error" in err


def test_json_config_accepted(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"metric": {"family": "constant", "g": [[1, 0], [0, 2]]},
                             "curvature": {"points": [[0.1, 0.2, 0.3]]}}))
    code, js, _ = run(["curvature", "--config", str(p)], capsys)
    assert code == 0
    assert all(r["value"] == 0.0 or abs(r["value"]) < 1e-15 for r in json.loads(js)["rows"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ncspectral", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()


def test_reports_match_json_schema(tmp_path, capsys):
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((ROOT / "schema" / "report.schema.json").read_text())
    for args in (["curvature", "--config", str(CONFIGS / "twisted.yaml")],
                 ["tfunc", "--config", str(CONFIGS / "tfunc_general.yaml")],
                 ["verify", "--config", write(tmp_path, {"verify": {"criteria": [4, 5]}})]):
        _, js, _ = run(args, capsys)
        jsonschema.validate(json.loads(js), schema)


def test_verify_csv_round_trip(tmp_path, capsys):
    cfg = write(tmp_path, {"verify": {"criteria": [5, 7], "options": {7: {"inputs": 4}}}})
    _, js, _ = run(["verify", "--config", cfg], capsys)
    _, cs, _ = run(["verify", "--config", cfg, "--format", "csv"], capsys)
    want = [{k: c[k] for k in cli.VERIFY_HEADER} for c in json.loads(js)["checks"]]
    assert cli.parse_csv(cs) == want
