"""High-precision reference integrals shared by the tests."""
from __future__ import annotations

import mpmath


def unit_integral(f, dps: int = 30) -> float:
    """int_0^1 f(x, 1 - x) dx with x = y^10 near 0 and 1 - x = y^10 near 1 (smooths endpoint powers).

    ``f`` receives both x and 1 - x so neither endpoint loses precision.
    """
    with mpmath.workdps(dps):
        half = mpmath.mpf(0.5) ** mpmath.mpf(0.1)
        left = mpmath.quad(lambda y: f(y**10, 1 - y**10) * 10 * y**9, [0, half])
        right = mpmath.quad(lambda y: f(1 - y**10, y**10) * 10 * y**9, [0, half])
        return float(left + right)


def excess_exp(y):
    """e^-y - 1 + y without cancellation."""
    if abs(y) < mpmath.mpf("1e-4"):
        return y**2 / 2 - y**3 / 6 + y**4 / 24 - y**5 / 120
    return mpmath.exp(-y) - 1 + y
