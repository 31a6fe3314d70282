import csv
import io
import json
import subprocess
import sys

import pytest

from poincarekit import load_json, make_path, make_theta, save_csv, save_json
from poincarekit.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def edge_file(tmp_path):
    from poincarekit import build_space
    path = tmp_path / "edge.json"
    save_json(build_space([("a", "b", 1.0)], {"a": 1.0, "b": 1.0}), path)
    return str(path)


def test_generate_and_reload(tmp_path, capsys):
    out = tmp_path / "grid.json"
    code, _, _ = run(["generate", "grid", "--width", "3", "--height", "2", "--out", str(out)], capsys)
    assert code == 0
    assert load_json(out).n == 6


@pytest.mark.parametrize("kind", ["path", "complete", "theta", "snowflake", "weighted-line"])
def test_generate_kinds(kind, tmp_path, capsys):
    out = tmp_path / "s.json"
    assert run(["generate", kind, "--n", "6", "--out", str(out)], capsys)[0] == 0
    assert load_json(out).n >= 3


def test_analyze_single_edge_closed_form(edge_file, capsys):
    code, out, _ = run(["analyze", "--space", edge_file, "--p", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1 and doc["seed"] == 0
    assert doc["C_PI"] == pytest.approx(0.5)
    assert doc["doubling"] == 2.0
    assert doc["quasiconvexity"] == 1.0


def test_analyze_csv(edge_file, capsys):
    code, out, _ = run(["analyze", "--space", edge_file, "--format", "csv"], capsys)
    assert code == 0
    assert "schema_version=1" in out
    assert "C_PI" in out


def test_alpha_csv_with_zero_tau(tmp_path, capsys):
    path = tmp_path / "k.json"
    save_json(make_theta(2, 4, 1), path)
    code, out, _ = run(["alpha", "--space", str(path), "--p", "1", "--tau-grid", "0,0.5,1"], capsys)
    assert code == 0
    rows = [r for r in csv.DictReader(line for line in io.StringIO(out) if not line.startswith("#"))]
    assert [float(r["tau"]) for r in rows] == [0.0, 0.5, 1.0]
    assert float(rows[0]["alpha"]) == 0.0
    alphas = [float(r["alpha"]) for r in rows]
    assert alphas == sorted(alphas)


def test_verify_kz(tmp_path, capsys):
    path = tmp_path / "p.json"
    save_json(make_path(6), path)
    code, out, _ = run(["verify-kz", "--space", str(path), "--q-grid", "1.5,1.8",
                        "--c-a", "0.5", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["epsilon_bound"] > 0 and doc["epsilon_from_CA"] > 0
    assert "2^13" in doc["note"]
    assert [r["q"] for r in doc["rows"]] == [2.0, 1.8, 1.5]


def test_verify_kz_bad_exponent(edge_file, capsys):
    code, _, err = run(["verify-kz", "--space", edge_file, "--p", "1"], capsys)
    assert code == 2 and "p must exceed 1" in err


def test_iterate(tmp_path, capsys):
    space = make_theta(2, 4, 2)
    path = tmp_path / "t.json"
    save_json(space, path)
    ob = tmp_path / "ob.json"
    ob.write_text(json.dumps({"x": "x", "y": "y", "values": {"s1": 0.05, "s2": 0.05, "s3": 0.05}}))
    code, out, _ = run(["iterate", "--space", str(path), "--obstacle", str(ob), "--q", "1.9",
                        "--tau", "0.5"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert all(doc["checks"].values())


def test_iterate_inadmissible(tmp_path, capsys):
    path = tmp_path / "t.json"
    save_json(make_theta(2, 4, 1), path)
    ob = tmp_path / "ob.json"
    ob.write_text(json.dumps({"x": "x", "y": "y", "values": {"x": 1.0}}))
    code, _, err = run(["iterate", "--space", str(path), "--obstacle", str(ob), "--tau", "0.5"],
                       capsys)
    assert code == 2 and "tau" in err


@pytest.mark.parametrize("mode", ["solver", "maximal", "alpha"])
def test_oracle_modes(mode, tmp_path, capsys):
    path = tmp_path / "t.json"
    save_json(make_theta(2, 4, 1), path)
    code, out, _ = run(["oracle", "--space", str(path), "--mode", mode], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["checked"] > 0 and doc["mismatches"] == []


def test_oracle_too_large(tmp_path, capsys):
    path = tmp_path / "p.json"
    save_json(make_path(12), path)
    code, _, err = run(["oracle", "--space", str(path)], capsys)
    assert code == 2 and "cap" in err


def test_malformed_json_names_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"nodes": [0], "edges": []}))
    code, _, err = run(["analyze", "--space", str(path)], capsys)
    assert code == 2 and "'measure'" in err


def test_missing_file(tmp_path, capsys):
    code, _, _ = run(["analyze", "--space", str(tmp_path / "nope.json")], capsys)
    assert code == 2


def test_csv_space_with_sibling_measure(tmp_path, capsys):
    edges = tmp_path / "p.csv"
    save_csv(make_path(4), edges, tmp_path / "p.measure.csv")
    out = tmp_path / "report.json"
    code, _, _ = run(["analyze", "--space", str(edges), "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(out.read_text())["C_PI"] > 0


def test_console_module_runs(tmp_path):
    out = tmp_path / "g.json"
    proc = subprocess.run([sys.executable, "-m", "poincarekit.cli", "generate", "path", "--n", "3",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load_json(out).n == 3
