"""Merger rates lambda_{b,k} and per-size event tables."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .errors import DomainError
from .measure import LambdaMeasure
from .quadrature import integrate_unit_interval


def _check_bk(b: int, k: int) -> None:
    if int(b) != b or int(k) != k:
        raise DomainError("b and k must be integers")
    if not 2 <= k <= b:
        raise DomainError(f"need 2 <= k <= b, got b={b}, k={k}")


def merger_rate(lam: LambdaMeasure, b: int, k: int) -> float:
    """Rate at which one given k-subset of b blocks merges.

    lambda_{b,k} = int x**(k-2) (1-x)**(b-k) Lambda(dx).
    """
    _check_bk(b, k)
    terms = []
    if k == 2 and lam.kingman_mass:
        terms.append(lam.kingman_mass)
    if k == b and lam.top_mass:
        terms.append(lam.top_mass)
    for x, m in lam.atoms:
        terms.append(m * x ** (k - 2) * (1.0 - x) ** (b - k))
    for part in lam.betas:
        log_b = special.betaln(k - part.alpha, b - k + part.alpha) - special.betaln(part.a, part.b)
        terms.append(part.mass * math.exp(log_b))
    for dens in lam.densities:
        f = dens.func
        terms.append(integrate_unit_interval(lambda x: x ** (k - 2) * (1.0 - x) ** (b - k) * f(x)))
    return math.fsum(terms)


def _log_binom(b: int, ks: np.ndarray) -> np.ndarray:
    return special.gammaln(b + 1) - special.gammaln(ks + 1) - special.gammaln(b - ks + 1)


def subset_weights(lam: LambdaMeasure, b: int) -> np.ndarray:
    """C(b, k) * lambda_{b,k} for k = 2..b (index k - 2).

    Binomial factors are carried in log space so large b does not overflow.
    """
    if b < 2:
        return np.zeros(0)
    ks = np.arange(2, b + 1)
    w = np.zeros(b - 1)
    if lam.kingman_mass:
        w[0] += lam.kingman_mass * b * (b - 1) / 2.0
    if lam.top_mass:
        w[-1] += lam.top_mass
    for x, m in lam.atoms:
        # C(b,k) x^(k-2) (1-x)^(b-k) = Binomial(b, x) pmf at k / x^2
        w += m * stats.binom.pmf(ks, b, x) / (x * x)
    if lam.betas:
        log_c = _log_binom(b, ks)
        for part in lam.betas:
            logs = log_c + special.betaln(ks - part.alpha, b - ks + part.alpha) - special.betaln(part.a, part.b)
            w += part.mass * np.exp(logs)
    if lam.densities:
        log_c = _log_binom(b, ks)
        for dens in lam.densities:
            f = dens.func
            for i, k in enumerate(ks):
                rate = integrate_unit_interval(lambda x, k=k: x ** (k - 2) * (1.0 - x) ** (b - k) * f(x))
                if rate > 0.0:
                    w[i] += math.exp(log_c[i] + math.log(rate))
    return w


def total_event_rate(lam: LambdaMeasure, b: int) -> float:
    """Total rate of merger events among b blocks: sum_k C(b,k) lambda_{b,k}."""
    if int(b) != b or b < 2:
        raise DomainError(f"need integer b >= 2, got {b}")
    return rate_table(lam).total(int(b))


class RateTable:
    """Cached event rates and k-distributions for a fixed Lambda.

    Full cumulative tables are kept for small b; for large b only a head of
    the distribution is cached and the tail is recomputed on the rare draws
    that land there.
    """

    FULL_LIMIT = 512
    HEAD = 256

    def __init__(self, lam: LambdaMeasure):
        self.lam = lam
        self._cache: dict[int, tuple[float, np.ndarray, bool]] = {}

    def _entry(self, b: int):
        entry = self._cache.get(b)
        if entry is None:
            w = subset_weights(self.lam, b)
            total = math.fsum(w)
            full = b <= self.FULL_LIMIT
            cum = np.cumsum(w if full else w[: self.HEAD])
            entry = (total, cum, full or cum.size == w.size)
            self._cache[b] = entry
        return entry

    def total(self, b: int) -> float:
        if b < 2:
            return 0.0
        return self._entry(b)[0]

    def sample_k(self, b: int, u: float) -> int:
        """Inverse-CDF draw of the merger size k given a uniform u."""
        total, cum, complete = self._entry(b)
        target = u * total
        if complete or target < cum[-1]:
            i = int(np.searchsorted(cum, target, side="right"))
            return min(i, cum.size - 1) + 2
        full = np.cumsum(subset_weights(self.lam, b))
        i = int(np.searchsorted(full, target, side="right"))
        return min(i, full.size - 1) + 2

    def k_distribution(self, b: int) -> np.ndarray:
        w = subset_weights(self.lam, b)
        return w / w.sum()


@lru_cache(maxsize=64)
def rate_table(lam: LambdaMeasure) -> RateTable:
    return RateTable(lam)
