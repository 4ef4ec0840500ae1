import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from coreelements.cli import main, split_config


@pytest.fixture
def config_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"n": 120, "p": 3, "seed": 4, "methods": ["FullOLS", "Core", "Unif"],
                             "r_grid": [6, 12], "replications": 2}))
    return p


@pytest.fixture
def data_csv(tmp_path):
    g = np.random.default_rng(0)
    x = g.standard_normal((200, 3))
    y = x @ np.array([1.0, 2.0, -1.0]) + 0.1 * g.standard_normal(200)
    p = tmp_path / "d.csv"
    lines = ["x1,x2,x3,y"] + [",".join(repr(float(v)) for v in [*row, yv]) for row, yv in zip(x, y)]
    p.write_text("\n".join(lines) + "\n")
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_csv_deterministic(config_json, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(config_json), "-o", str(a)]) == 0
    assert main(["run", str(config_json), "-o", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert {r["method"] for r in rows} == {"FullOLS", "Core", "Unif"}
    assert all(r["wall_time_s"] == "" for r in rows)


def test_run_toml_nested(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text('methods = ["Core"]\nreplications = 1\nformat = "json"\n\n[experiment]\nn = 80\np = 2\n')
    out = tmp_path / "o.json"
    assert main(["run", str(p), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert sorted({row["r"] for row in doc["rows"]}) == [4, 8, 12, 16, 20]


def test_split_config_rejects_unknown():
    with pytest.raises(ValueError):
        split_config({"experiment": {"n": 10, "p": 2}, "bogus": 1})


def test_fit(data_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", str(data_csv), "--method", "Core", "--r", "100", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == "Core" and doc["r"] == 100
    assert np.allclose(doc["beta"], [1.0, 2.0, -1.0], atol=0.1)


def test_fit_mom_k_flag(data_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", str(data_csv), "--method", "MomCore", "--k", "4", "--r", "80", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["method"] == "MomCore(4)"


def test_fit_bootstrap(data_csv, tmp_path):
    out = tmp_path / "boot.csv"
    assert main(["fit", str(data_csv), "--method", "Unif", "--r", "50", "--bootstrap", "3", "-o", str(out)]) == 0
    reps = [r for r in _rows(out) if r["replication"] in ("0", "1", "2")]
    assert len(reps) == 3


def test_bounds(data_csv, tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bounds", str(data_csv), "--r-grid", "20,100,200", "-o", str(out)]) == 0
    rows = _rows(out)
    assert [r["r"] for r in rows] == ["20", "100", "200"]
    assert float(rows[-1]["lambda0"]) == 0.0


def test_bounds_eps_grid(data_csv, tmp_path):
    out = tmp_path / "e.json"
    assert main(["bounds", str(data_csv), "--eps-prime-grid", "0.05,0.2", "--format", "json", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [r["eps_prime"] for r in doc["rows"]] == [0.05, 0.2]


def test_gen(config_json, tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gen", str(config_json), "-o", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 120 and list(rows[0]) == ["x1", "x2", "x3", "y"]


def test_parse_error_exit(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,y\n1,2\nx,3\n")
    assert main(["fit", str(p)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err == {"error": "ParseError", "message": err["message"], "line": 3, "column": 1}


def test_missing_file_exit(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "none.csv")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_module_entry(config_json):
    res = subprocess.run([sys.executable, "-m", "coreelements", "run", str(config_json)],
                         capture_output=True, text=True, check=True)
    assert res.stdout.startswith("method,r,replication,mse")
