from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvlab.empirical import BallQuery, EmpiricalMeasure
from fvlab.errors import DomainError, SpecParseError
from fvlab.levy import (
    LevySpec,
    char_exponent,
    convolve_support,
    parse_levy,
    sample_increments,
    semigroup_apply,
    small_ball_prob,
)

CF_SPECS = [
    "brownian:sigma=1",
    "brownian:sigma=0.5+drift:1.5",
    "cpois:rate=2,jump=point:1;-1",
    "cpois:rate=3,jump=point:0.4;2,probs=0.25;0.75+drift:-0.3",
    "stable:alpha=1.5",
    "stable:alpha=0.7,scale=2",
    "stable:alpha=1",
    "stable:alpha=1.5,method=truncated,trunc=0.01",
    "cov:1/0.5;0.5/2+drift:0.2,-0.1",
    "stable:alpha=1.2,d=2",
    "stable:alpha=1.5,d=3",
]


def _check_cf(spec, t, xis, m=40000, seed=0):
    w = sample_increments(spec, t, np.random.default_rng(seed), m)
    for xi in xis:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        emp = np.exp(1j * (w @ xi)).mean()
        exact = np.exp(-t * char_exponent(spec, xi))
        # each of Re/Im has variance <= 1/m
        assert abs(emp - exact) < 5.0 / math.sqrt(m), (spec.to_spec(), xi, emp, exact)


@pytest.mark.parametrize("text", CF_SPECS)
def test_characteristic_function(text):
    spec = parse_levy(text)
    xis = [np.full(spec.dim, v) for v in (0.3, 1.0, 2.5)]
    _check_cf(spec, 0.7, xis)


def test_drift_moves_forward():
    w = sample_increments(parse_levy("drift:2"), 0.5, np.random.default_rng(0), 3)
    assert np.allclose(w, 1.0)


def test_compound_poisson_no_jump_fraction():
    w = sample_increments(parse_levy("cpois:rate=1,jump=point:1"), 1.0, np.random.default_rng(2), 50000)
    assert np.mean(w[:, 0] == 0.0) == pytest.approx(math.exp(-1), abs=0.01)


def test_array_durations():
    dts = np.array([0.0, 1.0, 2.0])
    w = sample_increments(parse_levy("drift:1"), dts, np.random.default_rng(0))
    assert w[:, 0].tolist() == [0.0, 1.0, 2.0]


def test_reversal_is_involution():
    spec = parse_levy("cpois:rate=2,jump=point:1;-0.5+drift:0.3+stable:alpha=1.5")
    rev = spec.reversed()
    assert np.allclose(rev.drift_vec, -spec.drift_vec)
    assert rev.reversed().to_spec() == spec.to_spec()
    xi = np.array([0.8])
    assert char_exponent(rev, xi) == pytest.approx(np.conj(char_exponent(spec, xi)))


@settings(max_examples=40, deadline=None)
@given(
    rate=st.floats(0.1, 5.0),
    sigma=st.floats(0.0, 3.0),
    drift=st.floats(-3.0, 3.0),
)
def test_spec_round_trip(rate, sigma, drift):
    text = f"brownian:sigma={sigma!r}+drift:{drift!r}+cpois:rate={rate!r},jump=point:1;-2"
    spec = parse_levy(text)
    again = parse_levy(spec.to_spec())
    xi = np.array([0.7])
    assert char_exponent(again, xi) == pytest.approx(char_exponent(spec, xi))


@pytest.mark.parametrize(
    "bad",
    ["", "levy:1", "stable:scale=1", "stable:alpha=2.5", "cpois:rate=1", "cpois:rate=-1,jump=point:1",
     "cpois:rate=1,jump=gauss:1", "brownian:sigma=1,d=2+drift:1", "cov:1/2;3/1", "brownian:foo=1"],
)
def test_parse_errors(bad):
    with pytest.raises(SpecParseError):
        parse_levy(bad)


def test_convolve_support_example():
    mu = EmpiricalMeasure.uniform([[0.0]])
    nu = parse_levy("cpois:rate=1,jump=point:1;-1").jump_atoms()
    conv = convolve_support(nu, mu, 2)
    order = np.argsort(conv.points[:, 0])
    assert conv.points[order, 0].tolist() == [-2.0, 0.0, 2.0]
    assert conv.weights[order] / conv.total_mass == pytest.approx([0.25, 0.5, 0.25])
    assert convolve_support(nu, mu, 0).points.tolist() == [[0.0]]
    with pytest.raises(DomainError):
        convolve_support(nu, mu, -1)


def test_small_ball_and_semigroup():
    spec = LevySpec.brownian(1.0)
    est = small_ball_prob(spec, 1.0, 1.0, 40000, np.random.default_rng(0))
    assert abs(est.value - 0.6826894921) < 4 * est.stderr
    assert small_ball_prob(LevySpec.zero(), 1.0, 0.1, 100, np.random.default_rng(0)).value == 1.0
    with pytest.raises(DomainError):
        small_ball_prob(spec, 1.0, 1.0, 99, np.random.default_rng(0))
    est = semigroup_apply(spec, 1.0, BallQuery((0.0,), 1.0), [0.0], 40000, np.random.default_rng(1))
    assert abs(est.value - 0.6826894921) < 4 * est.stderr


def test_psd_check():
    with pytest.raises(DomainError):
        LevySpec(2, cov=((1.0, 2.0), (2.0, 1.0)))
