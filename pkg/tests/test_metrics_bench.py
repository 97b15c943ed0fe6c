import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank_tv import bench
from lowrank_tv.bench import ExperimentConfig, TrialRecord, builtin_experiment, run_experiment
from lowrank_tv.density import PiecewiseDensity2D, uniform_density_2d
from lowrank_tv.metrics import density_l1_error, loglog_slope, matrix_l1_error
from lowrank_tv.models import box_density, separable_lipschitz_truth


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 32))
def test_matrix_metric_axioms(d1, d2, seed):
    a, b, c = np.random.default_rng(seed).dirichlet(np.ones(d1 * d2), 3).reshape(3, d1, d2)
    assert matrix_l1_error(a, b) == pytest.approx(matrix_l1_error(b, a))
    assert matrix_l1_error(a, c) <= matrix_l1_error(a, b) + matrix_l1_error(b, c) + 1e-12
    assert matrix_l1_error(a, a) == 0.0


def test_density_error_exact_cases():
    e = np.linspace(0, 1, 5)
    f = PiecewiseDensity2D(e, e, np.random.default_rng(0).random((4, 4)), "grid")
    assert density_l1_error(f, f, 256)[0] == 0.0
    err, bound = density_l1_error(uniform_density_2d(), box_density(0, 0.5, 0, 1), 256)
    assert err == pytest.approx(1.0) and bound == pytest.approx(0.0, abs=1e-12)


def test_density_error_richardson_contract():
    f = uniform_density_2d()
    truth = separable_lipschitz_truth()
    fine, bound = density_l1_error(f, truth, 1024)
    finer, _ = density_l1_error(f, truth, 2048)
    assert abs(finer - fine) <= bound
    with pytest.raises(ValueError):
        density_l1_error(f, truth, 64)


def test_loglog_slope_examples():
    x = np.logspace(0, 2, 6)
    fit = loglog_slope(zip(x, x))
    assert fit.slope == pytest.approx(1.0) and fit.r2 == pytest.approx(1.0)
    assert loglog_slope(zip(x, 3 * np.sqrt(x))).slope == pytest.approx(0.5)
    noisy = np.sqrt(x) * (1 + 0.01 * np.random.default_rng(1).standard_normal(6))
    assert 0.45 <= loglog_slope(zip(x, noisy)).slope <= 0.55
    np.testing.assert_allclose(fit.predict(x), x)
    with pytest.raises(ValueError):
        loglog_slope([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        loglog_slope([(1, 1), (2, 0), (3, 1)])


def test_single_record_config(tmp_path):
    cfg = ExperimentConfig("tiny", "discrete", {"d": [8], "n": [1000]}, 1, ["histogram"],
                           output_path=str(tmp_path / "t.csv"))
    recs = run_experiment(cfg)
    assert len(recs) == 1 == cfg.n_records
    rows = bench.read_csv(tmp_path / "t.csv")
    assert list(rows[0]) == bench.CSV_HEADER
    assert float(rows[0]["tv"]) == pytest.approx(float(rows[0]["error"]) / 2)
    assert rows[0]["runtime_ms"] == ""


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig("x", "discrete", {}, 1, ["alg2"])
    with pytest.raises(ValueError):
        ExperimentConfig("x", "density", {"n": [4]}, 1, ["alg2"])
    with pytest.raises(ValueError):
        ExperimentConfig("x", "discrete", {"d": [2], "K": [3]}, 1, ["histogram"])
    with pytest.raises(ValueError):
        ExperimentConfig("x", "discrete", {"q": [1]}, 1, ["histogram"])
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "x", "grid": {}, "replicates": 1,
                                    "estimators": ["histogram"], "bogus": 1})
    with pytest.raises(KeyError):
        builtin_experiment("nope")
    with pytest.raises(ValueError):
        TrialRecord("x", "histogram", 2, 10, 1, None, 0, -1.0)


def test_config_json_roundtrip(tmp_path):
    cfg = builtin_experiment("fig1-desk")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(path) == cfg
    assert cfg.n_records == 120


def test_trial_seeds_and_isolation():
    cfg = builtin_experiment("fig3-dirichlet", replicates=2)
    seeds = [s for _, s in bench.trial_seeds(cfg)]
    assert len(set(seeds)) == len(seeds)
    point, seed = bench.trial_seeds(cfg)[3]
    alone = bench.run_trial(cfg, point, seed)
    again = bench.run_trial(cfg, point, seed)
    assert [r.error for r in alone] == [r.error for r in again]
    assert alone[0].spec_hash == again[0].spec_hash


def test_parallel_matches_serial(tmp_path):
    cfg = ExperimentConfig("par", "discrete", {"d": [10, 20], "n": [2000]}, 3,
                           ["histogram", "localized_svd"], base_seed=5,
                           params={"threshold_scale": 0.04})
    a = bench.with_output(cfg, tmp_path / "a.csv")
    b = bench.with_output(cfg, tmp_path / "b.csv")
    run_experiment(a, jobs=1)
    run_experiment(b, jobs=3)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_density_trial_extras():
    cfg = ExperimentConfig("dens", "density", {"n": [1002]}, 1, ["alg2", "alg2_histbw"],
                           params={"guard_log_exponent": 0.0, "threshold_scale": 0.04},
                           instance={"quad_cells": 256})
    recs = run_experiment(cfg)
    assert len(recs) == 2
    for r in recs:
        assert r.extra["dropped"] == 2 and r.extra["factor2_ok"]
    assert recs[1].extra["estimator"] == "histogram-average"


def test_mean_errors_and_slope_summary():
    recs = [TrialRecord("e", "histogram", d, 10, 1, None, s, float(d) * (1 + s))
            for d in (10, 20, 40) for s in (0, 1)]
    means = bench.mean_errors(recs, "histogram", "d")
    assert means == {10: 15.0, 20: 30.0, 40: 60.0}
    fit, _ = bench.log_slope_summary(recs, "histogram", "d")
    assert fit.slope == pytest.approx(1.0)
