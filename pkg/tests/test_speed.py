from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

from oracles import excess_exp, unit_integral

from fvlab.errors import DomainError, UndeterminedError
from fvlab.measure import parse_lambda
from fvlab.speed import (
    Classification,
    c_lambda,
    comes_down_from_infinity,
    has_dust,
    psi,
    tail_integral,
    v_of_t,
    v_residual,
)


@pytest.mark.parametrize(
    "spec,cdi,dust",
    [
        ("kingman:1", "yes", "no"),
        ("beta:1.5", "yes", "no"),
        ("beta:1.2", "yes", "no"),
        ("uniform:1", "no", "no"),
        ("beta:0.8", "no", "yes"),
        ("atoms:0.5@0.3,0.5@0.6", "no", "yes"),
        ("atoms:0.5@0.3,0.5@0.6+beta:1.5", "yes", "no"),
    ],
)
def test_classifications(spec, cdi, dust):
    lam = parse_lambda(spec)
    assert comes_down_from_infinity(lam).value == cdi
    assert has_dust(lam).value == dust


def test_cdi_needs_no_atom_at_one():
    with pytest.raises(DomainError):
        comes_down_from_infinity(parse_lambda("atoms:1@1"))
    assert has_dust(parse_lambda("atoms:1@1")) is Classification.YES


def test_classification_truthiness():
    assert bool(Classification.YES) and not bool(Classification.NO)
    with pytest.raises(UndeterminedError):
        bool(Classification.UNDETERMINED)


def test_psi_atoms_closed_form():
    lam = parse_lambda("atoms:0.5@0.3")
    for u in (1e-6, 0.1, 3.0, 400.0):
        x = 0.3
        exact = 0.5 * (math.exp(-u * x) - 1 + u * x) / x ** 2
        assert psi(lam, u) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("alpha", [1.2, 1.5])
def test_psi_beta_against_mpmath(alpha):
    lam = parse_lambda(f"beta:{alpha}")
    norm = mpmath.beta(2 - alpha, alpha)
    for u in (0.01, 1.0, 50.0, 1e4):
        exact = unit_integral(lambda x, y: excess_exp(u * x) * x ** (-1 - alpha) * y ** (alpha - 1))
        assert psi(lam, u) == pytest.approx(exact / float(norm), rel=1e-7)


def test_psi_rejects_negative():
    with pytest.raises(DomainError):
        psi(parse_lambda("kingman:1"), -1.0)
    assert psi(parse_lambda("kingman:1"), np.array([1.0, 2.0])).shape == (2,)


def test_c_lambda():
    assert c_lambda(parse_lambda("kingman:1")) == 1.0
    assert c_lambda(parse_lambda("beta:1.5")) == 2.0
    assert c_lambda(parse_lambda("kingman:1+uniform:2")) == 0.5


def test_v_kingman_and_residual():
    lam = parse_lambda("kingman:2")
    for t in np.geomspace(1e-4, 10, 7):
        assert v_of_t(lam, t) == pytest.approx(1 / (2 * t), rel=1e-10)
    beta = parse_lambda("beta:1.5")
    v = v_of_t(beta, 0.1)
    assert abs(v_residual(beta, 0.1, v)) < 1e-8
    assert tail_integral(beta, v) == pytest.approx(0.1, rel=1e-8)
    assert v >= c_lambda(beta) / 0.1


def test_v_without_cdi_is_infinite():
    assert v_of_t(parse_lambda("uniform:1"), 1.0) == math.inf
    with pytest.raises(DomainError):
        v_of_t(parse_lambda("kingman:1"), 0.0)
