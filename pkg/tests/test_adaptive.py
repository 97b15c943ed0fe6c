import csv
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import lowrank_tv.adaptive as adaptive
from lowrank_tv.adaptive import (
    CandidateGrid,
    CumulativeMass,
    adaptive_density,
    build_candidates,
    empirical_measure_scheffe,
    integrate_over_scheffe,
    min_distance_select,
    oracle_slack,
    scheffe_mask,
)
from lowrank_tv.density import DensityParams, PiecewiseDensity2D, alg2_density_2d, uniform_density_2d
from lowrank_tv.models import sample_from_density, separable_lipschitz_truth
from oracles import cell_average_density, overlay_integral


def _random_density(rng, nx=None, ny=None, lo=0.0, hi=1.0):
    nx = nx or int(rng.integers(1, 8))
    ny = ny or int(rng.integers(1, 8))
    xe = np.unique(np.concatenate([[lo, hi], rng.uniform(lo, hi, nx - 1)]))
    ye = np.unique(np.concatenate([[lo, hi], rng.uniform(lo, hi, ny - 1)]))
    v = rng.random((len(xe) - 1, len(ye) - 1))
    v[rng.random(v.shape) < 0.2] = 0.0
    f = PiecewiseDensity2D(xe, ye, v + 1e-3, "grid")
    return f.with_values(f.values / f.integral())


def _half_box():
    e = np.array([0.0, 0.5, 1.0])
    return PiecewiseDensity2D(e, np.array([0.0, 1.0]), np.array([[2.0], [0.0]]), "grid")


def test_beta_grid():
    n = 10 ** 4
    b = CandidateGrid.beta_grid(n)
    assert len(b) == math.ceil(math.log(n) * math.log(math.log(n)))
    assert b[0] == 1.0
    assert b[3] == pytest.approx((1 + 1 / math.log(n)) ** -3)
    assert all(x > y for x, y in zip(b, b[1:]))
    with pytest.raises(ValueError):
        CandidateGrid.beta_grid(2)


@pytest.mark.parametrize("n,kmax", [(3, 2), (16, 4), (17, 5), (10 ** 4, 100), (10 ** 5, 317)])
def test_k_max(n, kmax):
    assert CandidateGrid.k_max(n) == kmax == math.ceil(math.sqrt(n) - 1e-12)


def test_default_grids():
    g = CandidateGrid.default(10 ** 4)
    assert g.Ks == (1, 2, 4, 8, 16, 32, 64)
    assert g.m == 7 * len(g.betas)
    assert g.entries()[0] == (1, 1, 1.0)
    assert CandidateGrid.default(100, full_k=True).Ks == tuple(range(1, 11))


def test_grid_validation():
    with pytest.raises(ValueError):
        CandidateGrid(10, (), (1.0,))
    with pytest.raises(ValueError):
        CandidateGrid(10, (1, 1), (1.0,))
    with pytest.raises(ValueError):
        CandidateGrid(10, (1,), (0.5, 0.9))


@pytest.fixture(scope="module")
def lipschitz_sample():
    return sample_from_density(separable_lipschitz_truth(), 2.25, 4000, seed=21)


def test_singleton_grid_equals_direct(lipschitz_sample):
    p = DensityParams(threshold_scale=0.04)
    cs = build_candidates(lipschitz_sample, CandidateGrid(4000, (3,), (0.8,)), p)
    direct = alg2_density_2d(lipschitz_sample, DensityParams(K=3, beta=0.8, threshold_scale=0.04))
    assert len(cs.densities) == 1
    np.testing.assert_array_equal(cs.densities[0].values, direct.values)


def test_dedup_and_determinism(lipschitz_sample):
    g = CandidateGrid.default(4000)
    a = build_candidates(lipschitz_sample, g)
    b = build_candidates(lipschitz_sample, g)
    built = len(a.densities) - len(a.shared_with)
    assert built <= g.m and len(a.densities) == g.m
    for fa, fb in zip(a.densities, b.densities):
        assert fa.values.tobytes() == fb.values.tobytes()


def test_failed_candidate_dropped_with_warning(lipschitz_sample, monkeypatch, caplog):
    real = adaptive.alg2_density_2d

    def flaky(x, params):
        if params.K == 2:
            raise ValueError("synthetic failure")
        return real(x, params)

    monkeypatch.setattr(adaptive, "alg2_density_2d", flaky)
    with caplog.at_level(logging.WARNING):
        cs = build_candidates(lipschitz_sample, CandidateGrid(4000, (1, 2), (1.0,)),
                              DensityParams(guard_log_exponent=0.0))
    assert [lab[0] for lab in cs.labels] == [1]
    assert "synthetic failure" in caplog.text


def test_scheffe_identical_is_empty():
    f = _random_density(np.random.default_rng(0))
    assert integrate_over_scheffe(f, f, f) == 0.0
    assert not scheffe_mask(f, f)[2].any()
    assert empirical_measure_scheffe(np.random.default_rng(1).random((50, 2)), f, f) == 0.0


def test_scheffe_half_box():
    fa, fb = uniform_density_2d(), _half_box()
    assert integrate_over_scheffe(fb, fa, fb) == pytest.approx(1.0)
    assert integrate_over_scheffe(fa, fa, fb) == pytest.approx(0.5)
    pts = np.random.default_rng(2).uniform(0, 0.49, (30, 2))
    assert empirical_measure_scheffe(pts, fa, fb) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_scheffe_matches_overlay_oracle(seed):
    rng = np.random.default_rng(seed)
    f, fa, fb = (_random_density(rng, lo=rng.uniform(0, 0.2), hi=rng.uniform(0.8, 1))
                 for _ in range(3))
    got = integrate_over_scheffe(f, fa, fb)
    assert got == pytest.approx(overlay_integral(f, fa, fb), abs=1e-12)
    # complement additivity: B_ab, B_ba and the tie set split the unit mass
    ties = overlay_integral(f, fa, fb) + overlay_integral(f, fb, fa)
    assert got + integrate_over_scheffe(f, fb, fa) == pytest.approx(ties, abs=1e-12)
    assert ties <= 1 + 1e-12


def test_scheffe_monte_carlo_exactness():
    rng = np.random.default_rng(3)
    for _ in range(5):
        f, fa, fb = (_random_density(rng) for _ in range(3))
        u = rng.random((10 ** 6, 2))
        vals = f(u[:, 0], u[:, 1]) * (fb(u[:, 0], u[:, 1]) > fa(u[:, 0], u[:, 1]))
        se = vals.std() / 1e3
        assert abs(integrate_over_scheffe(f, fa, fb) - vals.mean()) <= 3 * se + 1e-12


def test_cumulative_mass_matches_cdf():
    rng = np.random.default_rng(4)
    f = _random_density(rng, 5, 6, 0.1, 0.9)
    pts = rng.uniform(-0.2, 1.2, 40)
    np.testing.assert_allclose(CumulativeMass(f).grid(pts, pts),
                               f.cdf(pts[:, None], pts[None, :]), atol=1e-12)


def test_empirical_measure_brute_force():
    rng = np.random.default_rng(5)
    fa, fb = _random_density(rng), _random_density(rng)
    x = rng.random((300, 2))
    count = 0
    for px, py in x:
        count += float(fb(px, py)) > float(fa(px, py))
    assert empirical_measure_scheffe(x, fa, fb) == count / 300


def test_single_candidate_selected():
    f = _random_density(np.random.default_rng(6))
    sel, tr = min_distance_select([f], np.random.default_rng(7).random((20, 2)))
    assert sel is f and tr.selected == 0
    with pytest.raises(ValueError):
        min_distance_select([], np.zeros((4, 2)))


def test_planted_selection():
    truth = separable_lipschitz_truth()
    near = cell_average_density(truth, 32)
    wrong = _half_box()
    wins = 0
    for s in range(100):
        x = sample_from_density(truth, 2.25, 10 ** 4, seed=1000 + s)
        wins += min_distance_select([wrong, near], x)[1].selected == 1
    assert wins >= 95


def test_duplicates_and_permutations():
    rng = np.random.default_rng(8)
    cands = [_random_density(rng) for _ in range(4)]
    x = rng.random((500, 2))
    _, single = min_distance_select(cands, x)
    doubled = cands + cands
    _, tr2 = min_distance_select(doubled, x)
    assert tr2.selected == single.selected
    assert tr2.discrepancy.shape == (8, 8, 8)
    np.testing.assert_allclose(tr2.scores[:4], single.scores)
    perm = [2, 0, 3, 1]
    _, trp = min_distance_select([cands[i] for i in perm], x)
    best = set(np.flatnonzero(single.scores == single.scores.min()))
    best_p = {perm[i] for i in np.flatnonzero(trp.scores == trp.scores.min())}
    assert best == best_p


def test_discrepancy_table_definition():
    rng = np.random.default_rng(9)
    cands = [_random_density(rng) for _ in range(3)]
    x = rng.random((200, 2))
    _, tr = min_distance_select(cands, x)
    d = tr.discrepancy
    for c in range(3):
        for a in range(3):
            for b in range(3):
                if a == b:
                    assert d[c, a, b] == 0
                    continue
                ref = abs(overlay_integral(cands[c], cands[a], cands[b])
                          - empirical_measure_scheffe(x, cands[a], cands[b]))
                assert d[c, a, b] == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(tr.scores, d.reshape(3, -1).max(axis=1))


def test_adaptive_density_and_trace_csv(lipschitz_sample, tmp_path):
    f, tr = adaptive_density(lipschitz_sample)
    assert f.integral() == pytest.approx(1.0)
    path = tmp_path / "sel.csv"
    tr.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["candidate_K", "candidate_beta", "max_discrepancy", "selected_flag"]
    assert len(rows) == CandidateGrid.default(4000).m
    assert sum(int(r["selected_flag"]) for r in rows) == 1


def test_oracle_slack():
    assert oracle_slack(4, 10 ** 4, 0.1) == pytest.approx(2 * math.sqrt(2 * math.log(320) / 1e4))
