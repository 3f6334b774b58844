from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import pytest

from seprb_lab.analysis import mc_estimate
from seprb_lab.cli import SIMULATE_COLUMNS, run_command
from seprb_lab.config import SEED_ENV
from seprb_lab.ontology import EprbSettings, quantum_eprb

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = run_command(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_eprb(capsys):
    code, out, _ = run(capsys, "simulate", "--experiment", "eprb", "--alpha", "0", "--beta", "0.3927", "--n", "100000", "--seed", "7")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == SIMULATE_COLUMNS
    p = math.cos(0.3927) ** 2
    est = float(rows[0]["estimate"])
    assert abs(est - p) <= 5 * math.sqrt(p * (1 - p) / 100000)
    # the printed number is reproducible from the library directly
    direct = mc_estimate(quantum_eprb(), EprbSettings(0, 0.3927), "A=B", n=100000, seed=7)
    assert est == direct.value
    assert float(rows[0]["stderr"]) == direct.stderr


def test_chsh_optimal(capsys):
    code, out, _ = run(capsys, "chsh", "--optimal")
    assert code == 0
    report = json.loads(out)
    assert report["value"] == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert set(report["settings"]) == {"a1", "a2", "b1", "b2"}


def test_verify_retro(capsys):
    code, out, _ = run(capsys, "verify", "--model", "retro-eprb")
    assert code == 0
    checks = json.loads(out)["checks"]
    assert checks["locality"]["result"] == "PASS"
    assert checks["independence"]["result"] == "FAIL"
    assert checks["independence"]["expected"] == "FAIL"
    assert checks["joint_matches_quantum"]["result"] == "PASS"


@pytest.mark.parametrize("model", ["shared-coin", "polarization-hv", "cbeable-seprb", "timesym-seprb", "quantum-eprb"])
def test_verify_builtins_meet_their_claims(capsys, model):
    code, out, _ = run(capsys, "verify", "--model", model)
    assert code == 0, out
    assert json.loads(out)["failures"] == []


def test_chsh_local_model_passes_and_retro_is_reported(capsys):
    settings = ["--a1", "0", "--a2", "0.7854", "--b1", "0.3927", "--b2", "2.7489"]
    code, out, _ = run(capsys, "chsh", "--model", "polarization-hv", *settings)
    assert code == 0 and not json.loads(out)["violated"]
    code, out, _ = run(capsys, "chsh", "--model", "retro-eprb", *settings)
    assert code == 0 and json.loads(out)["violated"]


def test_claimed_local_model_violating_bound_exits_1(capsys, monkeypatch):
    # a model that claims Locality and Independence but hides a nonlocal joint
    from seprb_lab.ontology import BUILTIN_MODELS, _QuantumEprb

    def impostor():
        return _QuantumEprb(
            name="impostor",
            experiment_kind="EPRB",
            lambda_law=lambda s: {None: 1.0},
            response_a=lambda a, lam: 0.5,
            response_b=lambda b, lam: 0.5,
        )

    monkeypatch.setitem(BUILTIN_MODELS, "impostor", impostor)
    code, out, _ = run(capsys, "chsh", "--model", "impostor", "--a1", "0", "--a2", "0.7854", "--b1", "0.3927", "--b2", "2.7489")
    assert code == 1
    assert json.loads(out)["violated"]
    code, out, _ = run(capsys, "verify", "--model", "impostor")
    assert code == 1
    assert "chsh_bound" in json.loads(out)["failures"]


def test_transform(capsys):
    code, out, _ = run(capsys, "transform", "--experiment", "seprb", "--gamma", "0.3", "--beta", "0.9", "--arm", "3/2")
    assert code == 0
    doc = json.loads(out)
    assert all(doc["checks"].values())
    assert doc["output"]["kind"] == "EPRB" and doc["output"]["postselection"] == "A=C"


def test_transform_from_golden_diagram(capsys):
    code, out, _ = run(capsys, "transform", "--diagram", str(GOLDEN / "seprb_gamma0.3_beta0.9.json"))
    assert code == 0
    assert json.loads(out)["output"]["kind"] == "EPRB"


def test_polytope(capsys, tmp_path):
    code, out, _ = run(capsys, "polytope", "--box", "pr")
    assert code == 0 and not json.loads(out)["member"]
    code, out, _ = run(capsys, "polytope", "--box", "white-noise")
    assert code == 0 and json.loads(out)["member"]
    signalling = [[[[0, 0], [0, 0]] for _ in range(2)] for _ in range(2)]
    for i in range(2):
        for j in range(2):
            signalling[i][j][j][0] = 1
    path = tmp_path / "box.json"
    path.write_text(json.dumps({"box": signalling}))
    code, _, err = run(capsys, "polytope", "--box", str(path))
    assert code == 2 and "signal" in err


def test_exact_csv_golden(capsys):
    code, out, _ = run(capsys, "exact", "--experiment", "eprb", "--alpha", "0", "--beta", "0.5")
    assert code == 0
    assert out == (GOLDEN / "exact_eprb_0_0.5.csv").read_text()


def test_exact_without_angles_is_a_grid(capsys):
    code, out, _ = run(capsys, "exact", "--experiment", "seprb", "--grid", "4")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 16
    assert float(rows[0]["p_agree"]) == pytest.approx(1.0)


def test_degrees_flag(capsys):
    _, deg, _ = run(capsys, "exact", "--experiment", "eprb", "--alpha", "0", "--beta", "30", "--degrees")
    row = list(csv.DictReader(io.StringIO(deg)))[4]
    assert float(row["value"]) == pytest.approx(0.75, abs=1e-12)


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["bogus"], "invalid choice"),
        ([], "command is required"),
        (["simulate", "--experiment", "eprb", "--alpha", "0"], "beta"),
        (["simulate", "--experiment", "seprb", "--gamma", "0", "--beta", "1", "--target", "A=B"], "target"),
        (["verify"], "model"),
        (["verify", "--model", "nope"], "model"),
        (["polytope", "--box", "missing.json"], "box"),
        (["simulate", "--config", "/nonexistent.json"], "config"),
    ],
)
def test_usage_errors_exit_2(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert needle in err


def test_run_config_file(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"command": "simulate", "experiment": "seprb", "gamma": 0, "beta": 0.5236, "c": 1, "n": 5000, "seed": 4}))
    code, out, _ = run(capsys, "run", str(path))
    assert code == 0
    assert float(list(csv.DictReader(io.StringIO(out)))[0]["estimate"]) == pytest.approx(0.75, abs=0.05)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"command": "simulate", "beta": "abc"}))
    code, _, err = run(capsys, "run", str(bad))
    assert code == 2 and "beta" in err


def test_seed_env_var(capsys, monkeypatch):
    argv = ["simulate", "--experiment", "eprb", "--alpha", "0", "--beta", "1", "--n", "1000"]
    monkeypatch.setenv(SEED_ENV, "99")
    _, from_env, _ = run(capsys, *argv)
    _, explicit, _ = run(capsys, *argv, "--seed", "99")
    assert from_env == explicit


def test_help_mentions_seed_env(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and SEED_ENV in out


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--experiment", "eprb", "--alpha", "0.1", "--beta", "0.8", "--n", "200000", "--seed", "5"],
        ["sweep", "--experiment", "eprb", "--model", "retro-eprb", "--grid", "8"],
    ],
)
def test_output_file_identical_across_workers(tmp_path, argv):
    blobs = []
    for k, workers in enumerate((1, 2, 4, 1)):
        path = tmp_path / f"out{k}.csv"
        assert run_command([*argv, "--workers", str(workers), "--output", str(path)]) == 0
        blobs.append(path.read_bytes())
    assert len(set(blobs)) == 1
