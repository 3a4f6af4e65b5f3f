import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sfdetrunc.errors import DivergentMomentError, MassError
from sfdetrunc.measures import (
    DiracAtZero,
    ExponentialDensity,
    Mixture,
    discretize,
    exp_moment,
    from_config,
    interval_mass,
    tail_mass,
)


def quad_moment(rate, b, lower=-np.inf):
    val, _ = integrate.quad(lambda u: rate * math.exp((rate - b) * u), lower, 0.0)
    return val


def quad_mass(rate, a, b):
    val, _ = integrate.quad(lambda u: rate * math.exp(rate * u), a, b)
    return val


# -- oracle-backed examples ---------------------------------------------------


def test_exp_moment_oracle_values():
    assert quad_moment(1.0, 0.5) == pytest.approx(2.0, abs=1e-10)
    assert exp_moment(ExponentialDensity(1.0), 0.5) == pytest.approx(2.0, abs=1e-14)
    assert exp_moment(ExponentialDensity(1.0), 0.0) == 1.0
    assert exp_moment(DiracAtZero(), 7.3) == 1.0


def test_exp_moment_divergent():
    # the truncated integrals grow without bound: integral over [-L, 0] equals L
    partial = [quad_moment(1.0, 1.0, lower=-L) for L in (10.0, 100.0, 1000.0)]
    assert partial == pytest.approx([10.0, 100.0, 1000.0], rel=1e-8)
    with pytest.raises(DivergentMomentError):
        exp_moment(ExponentialDensity(1.0), 1.0)
    with pytest.raises(DivergentMomentError):
        exp_moment(Mixture(((0.5, DiracAtZero()), (0.5, ExponentialDensity(1.0)))), 1.5)


def test_interval_mass_examples():
    oracle = quad_mass(1.0, -math.log(2), 0.0)
    assert oracle == pytest.approx(0.5, abs=1e-12)
    assert interval_mass(ExponentialDensity(1.0), -math.log(2), 0.0) == pytest.approx(0.5, abs=1e-15)
    assert interval_mass(DiracAtZero(), -1.0, 0.0) == 1.0
    assert interval_mass(DiracAtZero(), -2.0, -1.0) == 0.0
    with pytest.raises(ValueError):
        interval_mass(DiracAtZero(), 0.0, -1.0)


def test_tail_mass_examples():
    oracle = quad_mass(1.0, -np.inf, -math.log(4))
    assert oracle == pytest.approx(0.25, abs=1e-10)
    assert tail_mass(ExponentialDensity(1.0), math.log(4)) == pytest.approx(0.25, abs=1e-15)
    assert tail_mass(DiracAtZero(), 3.0) == 0.0
    mix = Mixture(((0.5, DiracAtZero()), (0.5, ExponentialDensity(1.0))))
    assert tail_mass(mix, math.log(4)) == pytest.approx(0.5 * 0.0 + 0.5 * oracle, abs=1e-10)
    assert tail_mass(mix, math.log(4)) == pytest.approx(0.125, abs=1e-15)


def test_discretize_dirac():
    d = discretize(DiracAtZero(), 0.25, 1)
    assert d.weights.tolist() == [0.0, 0.0, 0.0, 1.0]
    assert d.tail == 0.0


def test_discretize_exponential_matches_quadrature():
    d = discretize(ExponentialDensity(1.0), 0.5, 1)
    oracle = [quad_mass(1.0, -1.0, -0.5), quad_mass(1.0, -0.5, 0.0)]
    assert d.weights == pytest.approx(oracle, abs=1e-12)
    assert d.weights == pytest.approx([0.23865121854119, 0.39346934028737], abs=1e-12)
    assert d.tail == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(MassError):
        Mixture(((0.4, DiracAtZero()), (0.5, ExponentialDensity(1.0))))
    with pytest.raises(MassError):
        from_config({"kind": "mixture", "parts": [[0.9, {"kind": "dirac0"}]]})


def test_exponential_rate_positive():
    with pytest.raises(ValueError):
        ExponentialDensity(0.0)


def test_config_roundtrip():
    cfg = {"kind": "mixture", "parts": [[0.25, {"kind": "dirac0"}], [0.75, {"kind": "exp", "rate": 2.0}]]}
    m = from_config(cfg)
    assert m.to_config() == cfg
    assert m.moment_boundary == 2.0


# -- properties -----------------------------------------------------------------

leaf = st.one_of(
    st.just(DiracAtZero()),
    st.floats(0.05, 8.0).map(ExponentialDensity),
)


@st.composite
def measures(draw):
    parts = draw(st.lists(leaf, min_size=1, max_size=3))
    if len(parts) == 1:
        return parts[0]
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=len(parts), max_size=len(parts)))
    total = math.fsum(raw)
    w = [x / total for x in raw]
    w[-1] = 1.0 - math.fsum(w[:-1])
    return Mixture(tuple(zip(w, parts)))


@settings(max_examples=60, deadline=None)
@given(measures(), st.integers(0, 10), st.integers(1, 30))
def test_mass_conservation(m, e, k):
    d = discretize(m, 2.0 ** -e, k)
    assert abs(d.total_mass - 1.0) <= 1e-12
    assert np.all(d.weights >= 0) and d.tail >= 0


@settings(max_examples=40, deadline=None)
@given(measures())
def test_exp_moment_increasing(m):
    top = min(m.moment_boundary, 20.0)
    bs = np.linspace(0.0, top, 30, endpoint=False)
    vals = [exp_moment(m, b) for b in bs]
    assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))
    if any(not isinstance(leaf_, DiracAtZero) for _, leaf_ in m.leaves()):
        assert all(b2 > b1 for b1, b2 in zip(vals, vals[1:]))


@settings(max_examples=40, deadline=None)
@given(measures(), st.integers(1, 8), st.integers(1, 10), st.floats(0.0, 0.99))
def test_discretization_below_moment(m, e, k, frac):
    dt = 2.0 ** -e
    b = frac * min(m.moment_boundary, 10.0)
    d = discretize(m, dt, k)
    right = (np.arange(-k * d.k1, 0) + 1) * dt
    assert math.fsum((d.weights * np.exp(-b * right)).tolist()) <= exp_moment(m, b) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(measures(), st.integers(0, 8), st.integers(1, 10))
def test_refinement_consistency(m, e, k):
    coarse = discretize(m, 2.0 ** -e, k)
    fine = discretize(m, 2.0 ** -(e + 1), k)
    paired = fine.weights[0::2] + fine.weights[1::2]
    assert np.max(np.abs(paired - coarse.weights)) <= 1e-12
    assert fine.tail == coarse.tail
