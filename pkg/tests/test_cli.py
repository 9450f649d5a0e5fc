import json
import os

import pytest

from momentlab.cli import main


def write_config(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture
def lt_cfg(tmp_path):
    return write_config(tmp_path, "lt.json", {
        "schema_version": 1, "model": "lt",
        "gen": {"n_s1": 3, "n_s2": 1, "n_s3": 2, "n_y": 4, "min_relevance": 0.2},
        "n": 600, "replications": 5, "seed": 7,
    })


def test_simulate_deterministic(tmp_path, lt_cfg):
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["simulate", "--config", lt_cfg, "--out", out1]) == 0
    assert main(["simulate", "--config", lt_cfg, "--out", out2]) == 0
    for name in ("dataset.csv", "truth.json"):
        a = open(os.path.join(out1, name)).read()
        b = open(os.path.join(out2, name)).read()
        assert a == b


def test_simulate_sidecar_truth(tmp_path, lt_cfg):
    out = str(tmp_path / "r")
    assert main(["simulate", "--config", lt_cfg, "--out", out]) == 0
    doc = json.loads(open(os.path.join(out, "truth.json")).read())
    from momentlab.causal import gen_long_term

    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=7, min_relevance=0.2)
    assert abs(doc["true_value"] - spec.mu) < 1e-12
    assert abs(doc["mu1"] - spec.mu1) < 1e-12
    assert doc["identification"]["verdict"] == "OverIdentified"
    assert doc["config"]["seed"] == 7


def test_unknown_model_exit_2(tmp_path):
    cfg = write_config(tmp_path, "bad.json", {"schema_version": 1, "model": "zzz"})
    assert main(["simulate", "--config", cfg]) == 2


def test_bad_schema_version_exit_2(tmp_path):
    cfg = write_config(tmp_path, "bad.json", {"schema_version": 99, "model": "lt"})
    assert main(["simulate", "--config", cfg]) == 2


def test_bad_generator_params_exit_2(tmp_path):
    cfg = write_config(tmp_path, "bad.json", {
        "schema_version": 1, "model": "lt", "gen": {"n_s1": 2, "n_s3": 3,
                                                    "deterministic_link": True},
    })
    assert main(["simulate", "--config", cfg]) == 2


def test_estimate_report_layout(tmp_path, lt_cfg):
    out = str(tmp_path / "r")
    assert main(["simulate", "--config", lt_cfg, "--out", out]) == 0
    data = os.path.join(out, "dataset.csv")
    assert main(["estimate", "--config", lt_cfg, "--data", data, "--out", out]) == 0
    text = open(os.path.join(out, "estimate.txt")).read()
    assert "estimate" in text
    assert "(" in text and ")" in text       # SE in parentheses
    assert "Hausman" in text
    assert "[" in text and "]" in text       # p-value in brackets
    doc = json.loads(open(os.path.join(out, "estimate.json")).read())
    for method in ("PlugIn", "OneStep", "MinDist"):
        assert "estimate" in doc["methods"][method]
        assert "se" in doc["methods"][method]
    assert "statistic" in doc["hausman"]
    assert "p_value" in doc["hausman"]
    assert os.path.getsize(os.path.join(out, "estimate.png")) > 0


def test_estimate_malformed_csv_exit_4(tmp_path, lt_cfg):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,real,header\n1,2,3,4\n")
    assert main(["estimate", "--config", lt_cfg, "--data", str(bad)]) == 4


def test_diagnose_triangle_demo(tmp_path):
    out = str(tmp_path / "r")
    assert main(["diagnose", "--demo-triangle", "--out", out]) == 0
    doc = json.loads(open(os.path.join(out, "diagnose.json")).read())
    tri = doc["triangle"]
    assert tri["P1"]["verdict"] == "JustIdentified"
    assert tri["P2"]["verdict"] == "JustIdentified"
    assert tri["P3"] == {"tangent_dim": 1, "full_dim": 2, "verdict": "OverIdentified"}


def test_diagnose_model_report(tmp_path, lt_cfg):
    out = str(tmp_path / "r")
    assert main(["diagnose", "--config", lt_cfg, "--out", out]) == 0
    doc = json.loads(open(os.path.join(out, "diagnose.json")).read())
    assert doc["identification"]["verdict"] == "OverIdentified"
    assert doc["identification"]["adjoint_kernel_dim"] == 2


def test_mc_outputs_and_rerun_identical(tmp_path, lt_cfg):
    out1, out2 = str(tmp_path / "m1"), str(tmp_path / "m2")
    assert main(["mc", "--config", lt_cfg, "--out", out1]) == 0
    assert main(["mc", "--config", lt_cfg, "--out", out2]) == 0
    s1 = open(os.path.join(out1, "mc_summary.json")).read()
    s2 = open(os.path.join(out2, "mc_summary.json")).read()
    assert s1 == s2
    doc = json.loads(s1)
    assert "bound_ratio" in doc["methods"]["OneStep"]
    assert os.path.getsize(os.path.join(out1, "mc_records.csv")) > 0
    assert os.path.getsize(os.path.join(out1, "mc_estimates.png")) > 0


def test_mc_replications_override(tmp_path, lt_cfg):
    out = str(tmp_path / "m")
    assert main(["mc", "--config", lt_cfg, "--out", out, "--replications", "2"]) == 0
    doc = json.loads(open(os.path.join(out, "mc_summary.json")).read())
    assert doc["replications"] == 2


def test_npiv_estimate_emits_four_fields(tmp_path):
    cfg = write_config(tmp_path, "npiv.json", {
        "schema_version": 1, "model": "npiv",
        "gen": {"n_t": 3, "n_z": 4, "n_y": 5, "linear_beta": 0.2,
                "min_relevance": 0.02},
        "n": 1500, "seed": 0,
    })
    out = str(tmp_path / "r")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    data = os.path.join(out, "dataset.csv")
    assert main(["estimate", "--config", cfg, "--data", data, "--out", out]) == 0
    doc = json.loads(open(os.path.join(out, "estimate.json")).read())
    assert set(doc["methods"]) == {"IS", "ES"}
    for m in doc["methods"].values():
        assert "estimate" in m and "se" in m
    assert "statistic" in doc["hausman"] and "p_value" in doc["hausman"]
