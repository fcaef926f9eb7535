import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censinv.markov import Propagator, flow_rhs, flow_x, mat_exp, propagate_m, survival
from censinv.model import ModelSpec

from conftest import random_spec


def test_mat_exp_identity_cases():
    A = np.array([[-3.0, 1.0], [2.0, -0.5]])
    np.testing.assert_array_equal(mat_exp(A, 0.0), np.eye(2))
    np.testing.assert_allclose(mat_exp(np.zeros((2, 2)), 5.0), np.eye(2), atol=0)


def test_mat_exp_eigen_oracle():
    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    w, V = np.linalg.eig(A)
    oracle = (V * np.exp(w)) @ np.linalg.inv(V)
    e2 = np.exp(-2.0)
    closed = 0.5 * np.array([[1 + e2, 1 - e2], [1 - e2, 1 + e2]])
    np.testing.assert_allclose(mat_exp(A, 1.0), closed, rtol=1e-12)
    np.testing.assert_allclose(oracle, closed, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_mat_exp_matches_eigendecomposition(m, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(m, m))
    A = B + B.T  # symmetric, so the eigen route is well conditioned
    w, V = np.linalg.eigh(A)
    oracle = (V * np.exp(0.3 * w)) @ V.T
    np.testing.assert_allclose(mat_exp(A, 0.3), oracle, rtol=1e-12,
                               atol=1e-12 * np.abs(oracle).max())


def test_mat_exp_rejects_nonfinite():
    with pytest.raises(ValueError):
        mat_exp(np.array([[np.nan]]), 1.0)


def test_propagate_m_examples(two_state, single_state):
    pi = np.array([0.3, 0.7])
    np.testing.assert_array_equal(propagate_m(two_state, pi, 0.0), pi)
    assert propagate_m(single_state, [1.0], 0.7)[0] == pytest.approx(np.exp(-1.4), rel=1e-14)
    still = ModelSpec(Q=[[-1, 1], [1, -1]], lam=[0.0, 0.0], f=[[1.0], [1.0]], Pbar=1,
                      c=[0, 1], K=[0, 1], T=1.0)
    e2 = np.exp(-2.0)
    np.testing.assert_allclose(propagate_m(still, [1, 0], 1.0), [(1 + e2) / 2, (1 - e2) / 2],
                               rtol=1e-14)
    with pytest.raises(ValueError):
        propagate_m(two_state, pi, -1.0)


def test_survival_examples(two_state, single_state):
    assert survival(two_state, [0.5, 0.5], 0.0) == 1.0
    assert survival(single_state, [1.0], 0.5) == pytest.approx(np.exp(-1.0), rel=1e-14)
    for t in (0.1, 1.0, 3.0):
        assert survival(two_state, [0.5, 0.5], t) >= np.exp(-two_state.lam_bar * t)


def test_flow_equal_intensities_is_chain_marginal():
    spec = ModelSpec(Q=[[-1, 1], [0.5, -0.5]], lam=[1.5, 1.5], f=[[1.0], [1.0]], Pbar=1,
                     c=[0, 1], K=[0, 1], T=1.0)
    pi = np.array([0.2, 0.8])
    expected = mat_exp(spec.Q.T, 0.9) @ pi
    np.testing.assert_allclose(flow_x(spec, pi, 0.9), expected, atol=1e-14)
    np.testing.assert_array_equal(flow_x(spec, pi, 0.0), pi)


def test_flow_finite_difference(two_state):
    pi, t, d = np.array([0.6, 0.4]), 0.8, 1e-6
    fd = (flow_x(two_state, pi, t + d) - flow_x(two_state, pi, t - d)) / (2 * d)
    np.testing.assert_allclose(fd, flow_rhs(two_state, flow_x(two_state, pi, t)), atol=1e-8)


def test_propagator(two_state):
    P = Propagator(two_state, 0.01)
    assert np.all(P.E >= 0)
    assert np.all(P.E.sum(axis=0) <= 1.0)
    np.testing.assert_allclose(P.power(7), mat_exp(P.A, 0.07), rtol=1e-13)
    path = P.m_path(np.array([0.5, 0.5]), 10)
    np.testing.assert_allclose(path[10], propagate_m(two_state, [0.5, 0.5], 0.1), rtol=1e-13)


beliefs = st.integers(0, 2**31).map(lambda s: np.random.default_rng(s).dirichlet(np.ones(3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), beliefs, st.floats(0, 2), st.floats(0, 2))
def test_flow_semigroup(seed, pi, s, t):
    spec = random_spec(np.random.default_rng(seed), m=3)
    np.testing.assert_allclose(flow_x(spec, flow_x(spec, pi, s), t), flow_x(spec, pi, s + t),
                               atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), beliefs, beliefs, st.floats(0.01, 3), st.floats(0.1, 10))
def test_linearity_and_scale_invariance(seed, p1, p2, t, scale):
    spec = random_spec(np.random.default_rng(seed), m=3)
    np.testing.assert_allclose(propagate_m(spec, 2 * p1 + 3 * p2, t),
                               2 * propagate_m(spec, p1, t) + 3 * propagate_m(spec, p2, t),
                               atol=1e-12)
    np.testing.assert_allclose(flow_x(spec, scale * p1, t), flow_x(spec, p1, t), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), beliefs, st.floats(0, 3), st.floats(1e-3, 1))
def test_survival_decreases(seed, pi, t, d):
    spec = random_spec(np.random.default_rng(seed), m=3)
    s0, s1 = survival(spec, pi, t), survival(spec, pi, t + d)
    assert 0 < s1 < s0 <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), beliefs, st.floats(0.01, 3))
def test_ode_residual(seed, pi, t):
    spec = random_spec(np.random.default_rng(seed), m=3)
    d = 1e-6
    fd = (flow_x(spec, pi, t + d) - flow_x(spec, pi, t - d)) / (2 * d)
    assert np.abs(fd - flow_rhs(spec, flow_x(spec, pi, t))).max() <= 1e-6
