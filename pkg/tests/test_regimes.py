import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfdetrunc.errors import NonGeneratorError, ReducibleError
from sfdetrunc.regimes import (
    RegimeGenerator,
    TransitionMatrix,
    sample_regime_path,
    stationary_distribution,
    transition_matrix,
)

GAMMA = [[-1.0, 1.0], [2.0, -2.0]]


def two_state_closed_form(a, b, dt):
    """exp(dt * [[-a, a], [b, -b]]) from the eigen-split: eigenvalues 0 and -(a+b)."""
    e = math.exp(-(a + b) * dt)
    s = a + b
    return np.array([[b + a * e, a - a * e], [b - b * e, a + b * e]]) / s


def test_identity_limit():
    P = transition_matrix(RegimeGenerator(GAMMA), 1e-12).matrix
    assert np.max(np.abs(P - np.eye(2))) <= 1e-10


def test_example_generator_closed_form():
    dt = math.log(2) / 3
    oracle = two_state_closed_form(1.0, 2.0, dt)
    assert oracle == pytest.approx(np.array([[5 / 6, 1 / 6], [1 / 3, 2 / 3]]), abs=1e-15)
    P = transition_matrix(RegimeGenerator(GAMMA), dt).matrix
    assert np.max(np.abs(P - oracle)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-6, 0))
def test_rows_stochastic(log_dt):
    P = transition_matrix(RegimeGenerator(GAMMA), 10.0 ** log_dt).matrix
    assert np.max(np.abs(P.sum(axis=1) - 1.0)) <= 1e-12
    assert np.all((P >= 0) & (P <= 1))


@st.composite
def generators(draw):
    n = draw(st.integers(1, 4))
    rates = np.array(draw(st.lists(st.floats(0.0, 5.0), min_size=n * n, max_size=n * n))).reshape(n, n)
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return RegimeGenerator(rates)


@settings(max_examples=50, deadline=None)
@given(generators(), st.floats(-6, 0))
def test_semigroup(g, log_dt):
    dt = 10.0 ** log_dt
    P = transition_matrix(g, dt).matrix
    P2 = transition_matrix(g, 2 * dt).matrix
    assert np.max(np.abs(P2 - P @ P)) <= 1e-10


def test_non_generator_rejected():
    with pytest.raises(NonGeneratorError):
        RegimeGenerator([[-1.0, 1.1], [2.0, -2.0]])
    with pytest.raises(NonGeneratorError):
        RegimeGenerator([[1.0, -1.0], [2.0, -2.0]])
    with pytest.raises(NonGeneratorError):
        transition_matrix([[0.0, 1.0]], 0.1)


def test_stationary_examples():
    pi = stationary_distribution(RegimeGenerator(GAMMA))
    assert pi == pytest.approx([2 / 3, 1 / 3], abs=1e-14)
    assert np.max(np.abs(pi @ np.array(GAMMA))) <= 1e-14
    assert stationary_distribution(RegimeGenerator([[0.0]])) == pytest.approx([1.0])
    assert stationary_distribution(RegimeGenerator([[-1.0, 1.0], [1.0, -1.0]])) == pytest.approx([0.5, 0.5])


def test_reducible_rejected():
    with pytest.raises(ReducibleError):
        stationary_distribution(RegimeGenerator(np.zeros((2, 2))))


def test_identity_path_is_constant(rng):
    path = sample_regime_path(TransitionMatrix(np.eye(3), 0.1), 2, 100, rng)
    assert path.states.tolist() == [2] * 101


def test_zero_steps(rng):
    P = transition_matrix(RegimeGenerator(GAMMA), 0.1)
    assert sample_regime_path(P, 1, 0, rng).states.tolist() == [1]


def test_one_uniform_per_step():
    P = transition_matrix(RegimeGenerator(GAMMA), 0.1)
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    sample_regime_path(P, 1, 37, a)
    b.random(37)
    assert a.random() == b.random()


def test_point_mass_rows_still_consume(rng):
    # a deterministic cycle still draws one uniform per step
    P = TransitionMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    path = sample_regime_path(P, 1, 6, a)
    assert path.states.tolist() == [1, 2, 1, 2, 1, 2, 1]
    b.random(6)
    assert a.random() == b.random()


def test_occupation_matches_stationary():
    # 2x2 chain: occupation variance is binomial inflated by (1+l)/(1-l), l = exp(-3 dt)
    dt, steps = 0.01, 10**6
    P = transition_matrix(RegimeGenerator(GAMMA), dt)
    path = sample_regime_path(P, 1, steps, np.random.default_rng(1234))
    frac = np.mean(path.states[1:] == 1)
    pi1 = stationary_distribution(RegimeGenerator(GAMMA))[0]
    lam = math.exp(-3 * dt)
    se = math.sqrt(pi1 * (1 - pi1) / steps * (1 + lam) / (1 - lam))
    assert abs(frac - pi1) <= 3 * se
