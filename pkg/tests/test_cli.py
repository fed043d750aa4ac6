import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from entroq.cli import main
from entroq.states import save_state, seeded_pair


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("ENTROQ_SEED", raising=False)


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _manifest(d):
    return json.loads(_read(os.path.join(d, "manifest.json")))


def test_quadrature_outputs(tmp_path):
    assert main(["quadrature", "--m", "6", "--fixed-end", "one", "--out", str(tmp_path)]) == 0
    rule = json.loads(_read(tmp_path / "rule.json"))
    assert len(rule["nodes"]) == 6 and rule["nodes"][-1] == 1.0
    assert abs(sum(rule["weights"]) - 1) < 1e-12
    rows = list(csv.DictReader(open(tmp_path / "errors.csv")))
    assert len(rows) == 100 and set(rows[0]) == {"x", "exact", "approx", "error"}
    man = _manifest(tmp_path)
    assert man["command"] == "quadrature" and set(man["outputs"]) == {"rule.json", "errors.csv"}
    assert {"numpy", "numba", "python", "artifact"} <= set(man["versions"])


def test_quadrature_error_decreases_with_m(tmp_path, capsys):
    errs = []
    for m in (4, 6, 8):
        main(["quadrature", "--m", str(m), "--x-grid", "0.05:1:40", "--out", str(tmp_path / str(m))])
        errs.append(json.loads(capsys.readouterr().out)["max_error"])
    assert errs[0] > errs[1] > errs[2]


def test_quadrature_single_node(tmp_path, capsys):
    assert main(["quadrature", "--m", "1", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["nodes"] == [1.0] and out["weights"] == [1.0]


def test_validation_exit_code(tmp_path):
    assert main(["quadrature", "--m", "6", "--alpha", "2.5", "--out", str(tmp_path)]) == 2
    assert main(["quadrature", "--m", "0", "--out", str(tmp_path)]) == 2


def test_support_exit_code(tmp_path):
    rho = tmp_path / "rho.json"
    sigma = tmp_path / "sigma.json"
    save_state(rho, np.eye(2) / 2)
    save_state(sigma, np.diag([1.0, 0.0]))
    assert main(["estimate", "relent", "--rho", str(rho), "--sigma", str(sigma), "--k", "3", "--out", str(tmp_path)]) == 3
    main(["oracle", "--kind", "relent", "--rho", str(rho), "--sigma", str(sigma), "--out", str(tmp_path)])
    assert json.loads(_read(tmp_path / "oracle.json"))["relent"]["finite"] is False


def test_missing_file_exit_code(tmp_path):
    assert main(["oracle", "--rho", str(tmp_path / "no.json"), "--sigma", str(tmp_path / "no.json"),
                 "--out", str(tmp_path)]) == 1


def test_oracle_flipped_pair(tmp_path, capsys):
    rho, sigma = tmp_path / "r.json", tmp_path / "s.json"
    save_state(rho, np.diag([0.025, 0.975]))
    save_state(sigma, np.diag([0.975, 0.025]))
    assert main(["oracle", "--kind", "petz", "--alpha", "1.5", "--rho", str(rho), "--sigma", str(sigma),
                 "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["petz"]["value"] - 5.214247) < 1e-5


def test_petz_alpha_two_note(tmp_path, capsys):
    rc = main(["estimate", "petz", "--alpha", "2", "--seed-states", "3", "--k", "5", "--out", str(tmp_path)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert any("no quadrature" in n for n in out["notes"])
    assert min(int(r["node"]) for r in csv.DictReader(open(tmp_path / "traces.csv"))) == 0


def test_estimate_equal_states(tmp_path, capsys):
    rc = main(["estimate", "relent", "--seed-states", "4,4", "--qubits", "1", "--out", str(tmp_path)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["aggregate"]) <= 0.01
    rep = json.loads(_read(tmp_path / "report.json"))
    assert abs(rep["oracle"]) < 1e-12


def test_manifest_rerun_estimate(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["estimate", "ft", "--seed-states", "2", "--k", "20", "--seed", "5", "--out", str(a)]) == 0
    assert main(["estimate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    for f in ("report.json", "traces.csv"):
        assert _read(a / f) == _read(b / f)
    assert _manifest(a)["outputs"] == _manifest(b)["outputs"]


def test_manifest_rerun_bp_scan(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["bp-scan", "--qubits", "2-3", "--layers", "1", "--samples", "4", "--out", str(a)]) == 0
    assert main(["bp-scan", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert _read(a / "bp_scan.csv") == _read(b / "bp_scan.csv")
    assert len(_read(a / "bp_scan.csv").splitlines()) == 5


def test_manifest_rerun_superadd(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["superadd-scan", "--points", "0,0,0;0.05,0.05,0.1", "--population", "6", "--generations", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(["superadd-scan", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert _read(a / "superadd_scan.csv") == _read(b / "superadd_scan.csv")
    rows = list(csv.DictReader(open(a / "superadd_scan.csv")))
    assert rows[0]["single_use"] == "1.0" and rows[0]["confirmed"] == "false"


def test_flags_override_config(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["quadrature", "--m", "4", "--out", str(a)])
    main(["quadrature", "--config", str(a / "manifest.json"), "--m", "5", "--out", str(b)])
    assert _manifest(b)["config"]["m"] == 5


def test_seed_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("ENTROQ_SEED", "77")
    assert main(["estimate", "ft", "--seed-states", "2", "--k", "3", "--seed", "5", "--out", str(tmp_path)]) == 0
    man = _manifest(tmp_path)
    assert man["config"]["seed"] == 77 and man["seed_env"] == "77"


def test_console_script_and_numpy_fallback(tmp_path):
    env = dict(os.environ, ENTROQ_DISABLE_NUMBA="1")
    code = "from entroq._accel import backend_name; print(backend_name())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    r = subprocess.run([sys.executable, "-m", "entroq.cli", "quadrature", "--m", "3", "--out", str(tmp_path)],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 0
    assert _manifest(tmp_path)["versions"]["kernels"] == "numpy"
