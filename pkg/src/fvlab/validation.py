"""Statistical cross-checks between the lookdown, the coalescent and the thinning oracle."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .coalescent import UniformStream, simulate_coalescent
from .errors import DomainError
from .lookdown import BernoulliThinning, ancestral_partition, lookdown_events, simulate_lookdown
from .measure import LambdaMeasure
from .rates import rate_table


@dataclass
class GofReport:
    name: str
    statistic: float
    dof: int
    pvalue: float
    samples: int
    alpha: float = 0.01
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pvalue > self.alpha

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def two_sample_chi2(a: Counter, b: Counter, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Chi-square homogeneity test of two categorical samples.

    Categories whose pooled expected counts fall below ``min_expected`` are
    merged into one residual cell.
    """
    keys = sorted(set(a) | set(b), key=repr)
    na, nb = sum(a.values()), sum(b.values())
    if na == 0 or nb == 0:
        raise DomainError("both samples must be nonempty")
    rows_a, rows_b, rest_a, rest_b = [], [], 0, 0
    frac = min(na, nb) / (na + nb)
    for k in keys:
        pooled = a.get(k, 0) + b.get(k, 0)
        if pooled * frac < min_expected:
            rest_a += a.get(k, 0)
            rest_b += b.get(k, 0)
        else:
            rows_a.append(a.get(k, 0))
            rows_b.append(b.get(k, 0))
    if rest_a + rest_b > 0:
        rows_a.append(rest_a)
        rows_b.append(rest_b)
    if len(rows_a) < 2:
        return 0.0, 0, 1.0
    table = np.array([rows_a, rows_b])
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), int(dof), float(p)


def _exp_bin(x: float, edges: np.ndarray) -> int:
    return int(np.searchsorted(edges, x, side="right"))


def genealogy_duality(lam: LambdaMeasure, n: int, replicas: int, seed: int, bins: int = 10) -> GofReport:
    """Backward first merger of the lookdown's ancestral partition vs the [n]-coalescent.

    For each replica the lookdown is run to a horizon t; the first event of
    s -> Pi^t(s) is the last lookdown event before t.  Its lookback time is
    binned at the deciles of Exp(total rate), with lookbacks beyond t
    (no event) falling in the top bin since t exceeds the top edge.
    """
    rate = rate_table(lam).total(n)
    if rate <= 0:
        raise DomainError("zero event rate")
    edges = -np.log1p(-np.arange(1, bins) / bins) / rate
    horizon = 2.0 * float(edges[-1])
    look, coal = Counter(), Counter()
    for i in range(replicas):
        rng = rngmod.replica_rng(seed, i)
        traj = simulate_lookdown(n, lam, None, np.zeros((n, 1)), [horizon], rng)
        if traj.events:
            last = traj.events[-1]
            key = (_exp_bin(horizon - last.time, edges), last.levels)
        else:
            key = (bins - 1, None)
        look[key] += 1
        path = simulate_coalescent(lam, n, horizon, rngmod.replica_rng(seed, i, rngmod.ORACLE))
        if path.events:
            time, idx = path.events[0]
            key = (_exp_bin(time, edges), tuple(idx))
        else:
            key = (bins - 1, None)
        coal[key] += 1
    # censored replicas (no event before the horizon) go with the top bin
    for counter in (look, coal):
        censored = counter.pop((bins - 1, None), 0)
        if censored:
            counter[(bins - 1, "censored")] += censored
    chi2, dof, p = two_sample_chi2(look, coal)
    return GofReport(f"genealogy duality n={n}", chi2, dof, p, replicas, details={"lambda": lam.to_spec(), "horizon": horizon})


def thinning_equivalence(lam: LambdaMeasure, n: int, samples: int, seed: int, bins: int = 10, by_set: bool = False) -> GofReport:
    """Subset-rate event generator vs direct Bernoulli(u) thinning.

    Compares the joint law of (inter-event time decile, |J|) — or the full
    set J when ``by_set`` — by a chi-square homogeneity test.
    """
    oracle = BernoulliThinning(lam, n)
    rate = rate_table(lam.without_kingman()).total(n) + lam.kingman_mass * n * (n - 1) / 2.0
    edges = -np.log1p(-np.arange(1, bins) / bins) / rate
    stream = UniformStream(rngmod.replica_rng(seed, 0))
    subset, prev = Counter(), 0.0
    for k, ev in enumerate(lookdown_events(lam, n, math.inf, stream)):
        subset[(_exp_bin(ev.time - prev, edges), ev.levels if by_set else len(ev.levels))] += 1
        prev = ev.time
        if k + 1 == samples:
            break
    gaps, sets = oracle.sample(samples, rngmod.replica_rng(seed, 0, rngmod.ORACLE))
    thin = Counter((_exp_bin(g, edges), s if by_set else len(s)) for g, s in zip(gaps, sets))
    chi2, dof, p = two_sample_chi2(subset, thin)
    return GofReport(
        f"thinning equivalence n={n}", chi2, dof, p, samples,
        details={"lambda": lam.to_spec(), "subset_rate": rate, "thinning_rate": oracle.rate},
    )


def label_invariant_sweep(lambdas, trajectories: int, seed: int, n_range=(2, 25)) -> dict:
    """Reconstruct ancestral partitions at random (t, s) and count label violations."""
    rng = rngmod.replica_rng(seed, 0, rngmod.AUX)
    violations = checked = 0
    for i in range(trajectories):
        lam = lambdas[i % len(lambdas)]
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        horizon = float(rng.uniform(0.05, 2.0))
        traj = simulate_lookdown(n, lam, None, np.zeros((n, 1)), [horizon], rngmod.replica_rng(seed, i), event_cap=10**6)
        for _ in range(3):
            t = float(rng.uniform(0.0, horizon))
            s = float(rng.uniform(0.0, t))
            part = ancestral_partition(traj, t, s, check=False)
            checked += 1
            violations += not part.labels_match_levels()
    return {"trajectories": trajectories, "partitions": checked, "violations": violations}
