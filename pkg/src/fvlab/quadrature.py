"""Quadrature helpers shared by the rate and speed computations.

Adaptive integration is delegated to QUADPACK (``scipy.integrate.quad``);
the helpers here add the endpoint treatment needed for integrands carrying
powers of ``x`` near zero, plus fixed composite Gauss rules for smooth,
vectorised integrands.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

EPSABS = 1e-10
EPSREL = 1e-8


def integrate_interval(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
    points=None,
) -> float:
    if b <= a:
        return 0.0
    value, _ = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=500, points=points)
    return value


def integrate_unit_interval(
    f: Callable[[float], float],
    *,
    split: float = 0.5,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
) -> float:
    """Integrate ``f`` over (0, 1), tolerating an integrable singularity at 0.

    On (0, split] the substitution x = exp(-y) turns a power singularity
    x**(-p), p < 1, into an exponentially decaying tail in y.
    """
    split = min(max(split, 1e-300), 1.0)
    y0 = -math.log(split)

    def g(y):
        x = math.exp(-y)
        return f(x) * x

    left, _ = integrate.quad(g, y0, np.inf, epsabs=epsabs, epsrel=epsrel, limit=500)
    right = integrate_interval(f, split, 1.0, epsabs=epsabs, epsrel=epsrel)
    return left + right


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi(order: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [-1, 1] for the weight (1 - y)**a (1 + y)**b."""
    x, w = special.roots_jacobi(order, a, b)
    return x, w


def composite_gauss(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, order: int = 16) -> float:
    """Composite Gauss-Legendre rule for a vectorised smooth integrand."""
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return 0.0
    nodes, weights = gauss_legendre(order)
    lo = edges[:-1, None]
    width = np.diff(edges)[:, None]
    x = lo + width * nodes[None, :]
    vals = f(x.ravel()).reshape(x.shape)
    return math.fsum((vals * weights[None, :] * width).ravel())
