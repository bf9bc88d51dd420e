import json
import math
import subprocess
import sys

import numpy as np
import pytest

from shiftrec import SparseTensor
from shiftrec.cli import main
from shiftrec.data import SyntheticSpec, generate_full_support
from shiftrec.harness import ExperimentConfig, evaluate, mae, rmse
from shiftrec.tensor import read_coo, write_coo

PRED = np.array([3.0, 4.0, 2.0, 5.0, 1.0, 3.5, 2.0, 4.0, 3.0, 5.0])
TRUTH = np.array([3.0, 3.0, 3.0, 3.0, 1.0, 3.5, 4.0, 3.0, 3.0, 2.0])
# errors 0, 1, -1, 2, 0, 0, -2, 1, 0, 3 -> squares sum 20, abs sum 10


def test_metrics_hand_fixture():
    assert rmse(PRED, TRUTH) == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert mae(PRED, TRUTH) == pytest.approx(1.0, abs=1e-15)


def test_metrics_empty():
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        mae([], [])


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("svd",))
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())
    with pytest.raises(ValueError):
        ExperimentConfig(test_fraction=1.0)


def test_evaluate_exact_additive():
    inst = generate_full_support(SyntheticSpec((30, 40), known_fraction=0.8), seed=1)
    rep = evaluate(inst.masked, ExperimentConfig(methods=("sc",), fractions=(0.6, 1.0), seeds=(0, 1)))
    for row in rep.summary():
        assert row["rmse_mean"] < 1e-6 and row["mae_mean"] >= 0
    assert len(rep.rows) == 4


def test_evaluate_exact_multiplicative():
    spec = SyntheticSpec((30, 40), model="multiplicative", factor_range=(0.5, 2.0), known_fraction=0.8)
    inst = generate_full_support(spec, seed=2)
    rep = evaluate(inst.masked, ExperimentConfig(methods=("uc",), fractions=(1.0,), seeds=(0,)))
    assert rep.summary()[0]["rmse_mean"] < 1e-6


def test_report_serialization():
    inst = generate_full_support(SyntheticSpec((20, 20), base=3.0, known_fraction=0.8), seed=0)
    rep = evaluate(inst.masked, ExperimentConfig(fractions=(0.5, 1.0), seeds=(0, 1)))
    doc = json.loads(rep.to_json())
    assert {"config", "summary", "runs", "protocol_notes"} <= set(doc)
    assert doc["summary"][1]["label"] == "SC"
    assert any(r["label"].startswith("UC") for r in doc["summary"])
    csv_lines = rep.to_csv().splitlines()
    assert csv_lines[0].startswith("method,label,fraction")
    assert len(csv_lines) == 1 + 4
    assert isinstance(rep.gap("rmse", 1.0), float)


@pytest.fixture
def coo2x2(tmp_path):
    p = tmp_path / "t.coo"
    p.write_text("# shape 2 2\n1 2 2\n2 1 3\n2 2 4\n")
    return p


def test_cli_complete(coo2x2, tmp_path, capsys):
    out = tmp_path / "done.coo"
    assert main(["complete", "--input", str(coo2x2), "--out", str(out)]) == 0
    done = read_coo(out)
    assert abs(done[(1, 1)] - 1.0) < 1e-8
    assert done[(2, 2)] == 4.0
    diag = json.loads((tmp_path / "done.coo.json").read_text())
    assert diag["sweeps"] >= 1
    assert main(["complete", "--input", str(coo2x2)]) == 0
    lines = capsys.readouterr().out.splitlines()
    row = next(l for l in lines if l.startswith("1 1 "))
    assert float(row.split()[2]) == pytest.approx(1.0, abs=1e-8)


def test_cli_exit_codes(tmp_path, coo2x2):
    zero = tmp_path / "z.coo"
    zero.write_text("# shape 2 2\n1 2 0\n2 1 3\n")
    assert main(["complete", "--input", str(zero), "--method", "uc"]) == 3
    assert main(["complete", "--input", str(tmp_path / "missing.coo")]) == 2
    bad = tmp_path / "bad.coo"
    bad.write_text("# shape 2 2\n1 1 x\n")
    assert main(["complete", "--input", str(bad)]) == 2
    assert main(["complete"]) == 2
    assert main(["complete", "--input", str(coo2x2), "--epsilon", "-1"]) == 2
    assert main(["complete", "--input", str(coo2x2), "--k", "2"]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_convergence_exit(tmp_path):
    p = tmp_path / "r.coo"
    rng = np.random.default_rng(0)
    t = SparseTensor.from_dense(rng.normal(size=(20, 20)), rng.random((20, 20)) < 0.3)
    write_coo(t, p)
    assert main(["complete", "--input", str(p), "--epsilon", "1e-300", "--max-sweeps", "2"]) == 4


def test_cli_movielens_parse_error(tmp_path):
    p = tmp_path / "ratings.dat"
    p.write_text("1::5::x::978300760\n")
    assert main(["evaluate", "--input", str(p), "--flavor", "ml1m"]) == 2


def test_cli_evaluate_csv_deterministic(tmp_path):
    args = ["evaluate", "--synthetic", "25x30", "--known-fraction", "0.7", "--discretize", "1,5,1",
            "--fractions", "0.5,1.0", "--seeds", "0,1", "--format", "csv"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("\n") == 1 + 2 * 2


@pytest.mark.parametrize("audit", ["support", "shift-consistency", "uniqueness", "consensus", "fairness"])
def test_cli_audits_pass(audit, tmp_path):
    out = tmp_path / "a.json"
    rc = main(["audit", audit, "--synthetic", "15x18", "--known-fraction", "0.7", "--full-support",
               "--discretize", "1,5,1", "--trials", "3", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert rc == 0 and doc["passed"] is True


def test_cli_fairness_csv(tmp_path):
    out = tmp_path / "f.csv"
    rc = main(["audit", "fairness", "--synthetic", "40x30", "--known-fraction", "0.4",
               "--discretize", "1,5,1", "--format", "csv", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert rc == 0 and lines[0] == "N,changed_user_count" and len(lines) == 26
    assert all(l.split(",")[1] == "0" for l in lines[1:])


def test_cli_audit_support_violation_reported(tmp_path):
    p = tmp_path / "u.coo"
    p.write_text("# shape 3 3\n1 1 1\n1 2 1\n2 1 1\n2 2 1\n")
    out = tmp_path / "s.json"
    assert main(["audit", "support", "--input", str(p), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["fully_supported"] is False and doc["n_unsupported"] == 5


def test_cli_audit_uniqueness_violation_code(tmp_path):
    # an impossible tolerance turns the measured deviation into a violation
    rc = main(["audit", "uniqueness", "--synthetic", "10x12", "--known-fraction", "0.7",
               "--full-support", "--noise", "1", "--tolerance", "1e-300", "--out", str(tmp_path / "o")])
    assert rc == 5


def test_cli_consensus_bad_pattern(tmp_path):
    p = tmp_path / "c.coo"
    p.write_text("# shape 2 2\n1 1 1\n1 2 1\n")  # tie between columns
    assert main(["audit", "consensus", "--input", str(p), "--gamma", "1,2"]) == 2


def test_cli_generate(tmp_path):
    out, truth = tmp_path / "g.coo", tmp_path / "truth.coo"
    assert main(["generate", "--synthetic", "4x5", "--known-fraction", "0.5", "--seed", "3",
                 "--out", str(out), "--truth", str(truth)]) == 0
    g, tr = read_coo(out), read_coo(truth)
    assert g.nnz == 10 and tr.nnz == 20
    for c, v in g.items():
        assert tr[c] == v


def test_module_entry_point(coo2x2):
    proc = subprocess.run([sys.executable, "-m", "shiftrec", "complete", "--input", str(coo2x2)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "1 1 " in proc.stdout
