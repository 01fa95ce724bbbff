"""Sample statistics against scipy, config plumbing, and study smoke runs."""

import json

import numpy as np
import pytest
from scipy import stats

from singular_drift.drifts import DriftSpec
from singular_drift.lab import (
    ExperimentConfig,
    bootstrap_ci,
    config_digest,
    environment_fingerprint,
    kendall_trend,
    ks_stat,
    prepare_transform,
    study_lambda,
    study_mollify,
    study_smooth_consistency,
    wasserstein1,
)


ROUGH = DriftSpec(family="random-fourier", seed=42, beta=0.25, eta=0.3,
                  amplitude=0.25)


def tiny_config(**over):
    kw = dict(name="tiny", drift=ROUGH, modes=64, pde_nodes=16, steps=16,
              paths=300, seed=5, lam=2.0, n_list=(2, 4), tol=1e-9)
    kw.update(over)
    return ExperimentConfig(**kw)


# --- statistics ------------------------------------------------------------------------


def test_wasserstein1_matches_scipy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(500)
    b = rng.standard_normal(500) + 0.3
    assert wasserstein1(a, b) == pytest.approx(stats.wasserstein_distance(a, b),
                                               abs=1e-12)


def test_wasserstein1_translation():
    a = np.linspace(0.0, 1.0, 100)
    assert wasserstein1(a, a + 2.0) == pytest.approx(2.0, abs=1e-12)
    assert wasserstein1(a, a) == 0.0


def test_wasserstein1_unequal_sizes():
    rng = np.random.default_rng(1)
    a = rng.standard_normal(400)
    b = rng.standard_normal(300) + 1.0
    got = wasserstein1(a, b)
    assert got == pytest.approx(stats.wasserstein_distance(a, b), abs=0.05)
    with pytest.raises(ValueError):
        wasserstein1(a, np.array([]))


def test_ks_stat_matches_scipy():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(300)
    b = rng.standard_normal(400) * 1.5
    assert ks_stat(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic,
                                          abs=1e-12)


def test_kendall_trend_signs():
    down = kendall_trend([1, 2, 3, 4, 5], [5.0, 4.0, 3.0, 2.0, 1.0])
    assert down["tau"] == pytest.approx(-1.0)
    assert down["decreasing_at_5pct"]
    up = kendall_trend([1, 2, 3, 4, 5], [1.0, 2.0, 3.0, 4.0, 5.0])
    assert up["tau"] == pytest.approx(1.0)
    assert not up["decreasing_at_5pct"]


def test_bootstrap_ci_brackets_point_estimate():
    rng = np.random.default_rng(3)
    a = rng.standard_normal(400)
    b = rng.standard_normal(400) + 0.5
    lo, hi = bootstrap_ci(a, b, n_boot=300, seed=7)
    point = wasserstein1(a, b)
    assert lo <= point <= hi
    assert (lo, hi) == bootstrap_ci(a, b, n_boot=300, seed=7)   # deterministic
    with pytest.raises(ValueError):
        bootstrap_ci(a, b[:100])


# --- configuration plumbing ----------------------------------------------------------------


def test_experiment_config_roundtrip():
    cfg = tiny_config(lambda_list=(2.0, 4.0), delta=0.5, p=2.5)
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_experiment_config_validates_x0():
    with pytest.raises(ValueError):
        tiny_config(x0=(0.0, 0.0))


def test_config_digest_sensitivity():
    a = config_digest(tiny_config())
    b = config_digest(tiny_config())
    assert a == b and len(a) == 16
    assert config_digest(tiny_config(seed=6)) != a
    assert config_digest(tiny_config(note="annotated")) != a


def test_environment_fingerprint_keys():
    fp = environment_fingerprint()
    assert {"python", "numpy", "scipy", "platform", "package"} <= set(fp)


# --- the shared pipeline ---------------------------------------------------------------------


def test_prepare_transform_bundle():
    bundle = prepare_transform(tiny_config())
    assert bundle["lam"] == 2.0
    assert bundle["ctx"].gradient_bound <= 0.5
    assert bundle["solve_report"].converged
    assert bundle["assumption"].ok
    assert bundle["pde"].delta == 0.5 and bundle["pde"].p == 2.5
    assert bundle["ctx"].inverse_tol == tiny_config().inverse_tol


# --- studies ------------------------------------------------------------------------------


def test_study_mollify_smoke(tmp_path):
    cfg = tiny_config(out_dir=str(tmp_path))
    rep = study_mollify(cfg)
    assert rep.study == "mollify"
    assert [row["level"] for row in rep.levels] == [2, 4]
    for row in rep.levels:
        assert row["w1_t1"] >= 0.0
        assert row["ci_lo"] <= row["ci_hi"]
    assert rep.floor > 0.0
    assert "tau" in rep.trend
    root = tmp_path / rep.digest
    for name in ("report.json", "levels.csv", "drift.bin", "u.bin",
                 "manifest.json"):
        assert (root / name).exists(), name
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["digest"] == rep.digest
    saved = json.loads((root / "report.json").read_text())
    assert saved["levels"] == rep.levels


def test_study_lambda_smoke():
    rep = study_lambda(tiny_config(lambda_list=(2.0, 4.0)))
    assert rep.study == "lambda"
    assert len(rep.levels) == 1
    row = rep.levels[0]
    assert row["lambda_a"] == 2.0 and row["lambda_b"] == 4.0
    assert "within_3_floors" in row
    assert rep.floor > 0.0


def test_study_consistency_smoke():
    cfg = tiny_config(drift=DriftSpec(family="smooth-test", seed=1, beta=0.25,
                                      amplitude=0.2),
                      lam=1.0, steps_list=(8, 16), consistency_paths=100)
    rep = study_smooth_consistency(cfg)
    assert [row["steps"] for row in rep.levels] == [8, 16]
    assert "dev_ratio" in rep.levels[1]
    assert rep.levels[1]["pathwise_dev"] < rep.levels[0]["pathwise_dev"]


def test_study_consistency_requires_smooth_family():
    with pytest.raises(ValueError, match="smooth-test"):
        study_smooth_consistency(tiny_config())
