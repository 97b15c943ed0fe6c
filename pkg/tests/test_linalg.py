import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lowrank_tv.linalg import (
    bracket_norm,
    entrywise_l1_distance,
    nuclear_norm,
    numerical_rank,
    operator_norm,
    singular_values,
    soft_threshold_singular_values,
    svd,
)
from oracles import burer_monteiro_prox, prox_objective

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
small_matrices = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: arrays(np.float64, s, elements=finite))


def test_svd_diagonal():
    r = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(r.singular_values, [3, 1])
    np.testing.assert_allclose(np.abs(r.left_vectors), np.eye(2))
    np.testing.assert_allclose(np.abs(r.right_vectors), np.eye(2))


def test_svd_zero():
    np.testing.assert_array_equal(singular_values(np.zeros((2, 3))), [0, 0])


def test_svd_reconstruction():
    m = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_allclose(svd(m).reconstruct(), m, atol=1e-9)


def test_svd_large_reconstruction_relative():
    m = np.random.default_rng(1).normal(size=(400, 300))
    err = np.linalg.norm(svd(m).reconstruct() - m) / np.linalg.norm(m)
    assert err < 1e-9


def test_svd_deterministic():
    m = np.random.default_rng(2).normal(size=(7, 5))
    assert singular_values(m).tobytes() == singular_values(m).tobytes()


@pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((0, 2)), [[np.nan, 1.0]]])
def test_svd_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        svd(bad)


def test_soft_threshold_zero_tau_is_identity():
    m = np.random.default_rng(3).normal(size=(3, 4))
    np.testing.assert_array_equal(soft_threshold_singular_values(m, 0.0), m)


def test_soft_threshold_shrinks_by_half_tau():
    np.testing.assert_allclose(soft_threshold_singular_values(np.diag([3.0, 1.0]), 2.0),
                               np.diag([2.0, 0.0]), atol=1e-12)


def test_soft_threshold_grid_search_2x2():
    # brute-force minimization over diagonal 2x2 candidates on a fine grid
    m = np.diag([3.0, 1.0])
    grid = np.linspace(0, 3, 301)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    obj = (3 - a) ** 2 + (1 - b) ** 2 + 2.0 * (a + b)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    np.testing.assert_allclose(soft_threshold_singular_values(m, 2.0),
                               np.diag([grid[i], grid[j]]), atol=1e-12)


def test_soft_threshold_matches_iterative_minimizer():
    m = np.random.default_rng(4).normal(size=(3, 3))
    ref = burer_monteiro_prox(m, 0.5)
    assert np.linalg.norm(soft_threshold_singular_values(m, 0.5) - ref) < 1e-6


def test_soft_threshold_negative_tau():
    with pytest.raises(ValueError):
        soft_threshold_singular_values(np.eye(2), -1.0)


@settings(max_examples=60, deadline=None)
@given(small_matrices, st.sampled_from([0.1, 0.5, 2.0]), st.integers(0, 2 ** 31))
def test_prox_beats_random_perturbations(m, tau, seed):
    a = soft_threshold_singular_values(m, tau)
    best = prox_objective(m, a, tau)
    noise = np.random.default_rng(seed).normal(size=(200,) + m.shape)
    for e in noise:
        assert best <= prox_objective(m, a + 1e-3 * e, tau) + 1e-12


@settings(max_examples=60, deadline=None)
@given(small_matrices, st.floats(0.0, 5.0))
def test_prox_singular_values_are_shrunk(m, tau):
    s = singular_values(m)
    s_out = singular_values(soft_threshold_singular_values(m, tau))
    np.testing.assert_allclose(s_out, np.maximum(s - tau / 2, 0), atol=1e-9)


def test_operator_norm_examples():
    assert operator_norm(np.eye(3)) == pytest.approx(1.0)
    assert operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert operator_norm(np.outer(u, v)) == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))


@settings(max_examples=80, deadline=None)
@given(small_matrices)
def test_norm_chain(m):
    fro = np.sqrt(np.sum(m ** 2))
    assert operator_norm(m) <= fro * (1 + 1e-12) + 1e-12
    assert fro <= np.sqrt(m.size) * np.abs(m).max() * (1 + 1e-12) + 1e-12
    assert nuclear_norm(m) >= operator_norm(m) - 1e-9


def test_bracket_norm_examples():
    assert bracket_norm(np.full((2, 2), 0.25)) == pytest.approx(0.5)
    assert bracket_norm([[1.0, 0.0], [0.0, 0.0]]) == 1.0


def test_bracket_norm_brute_force():
    m = np.random.default_rng(5).random((3, 4))
    sums = [sum(m[i, j] for j in range(4)) for i in range(3)]
    sums += [sum(m[i, j] for i in range(3)) for j in range(4)]
    assert bracket_norm(m) == pytest.approx(max(sums))


def test_entrywise_l1_examples():
    m = np.random.default_rng(6).random((3, 3))
    assert entrywise_l1_distance(m, m) == 0.0
    assert entrywise_l1_distance(np.full((2, 2), 0.25), np.zeros((2, 2))) == 1.0
    a, b = np.random.default_rng(7).dirichlet(np.ones(12), 2)
    ref = sum(abs(x - y) for x, y in zip(a, b))
    assert entrywise_l1_distance(a.reshape(3, 4), b.reshape(3, 4)) == pytest.approx(ref)
    with pytest.raises(ValueError):
        entrywise_l1_distance(np.zeros((2, 2)), np.zeros((2, 3)))


def test_numerical_rank():
    u = np.random.default_rng(8).random((6, 2))
    assert numerical_rank(u @ u.T) == 2
