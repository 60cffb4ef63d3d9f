"""Fleming-Viot observables at finite n and the statistical checks built on them.

The type configuration (X_1(t), ..., X_n(t)) of the first n lookdown levels is
sampled from its genealogy: run the Lambda-coalescent on [n] backwards from
t, draw the ancestors at time 0 i.i.d. from mu0 and let types mutate along
the branches.  This has the law of the forward lookdown at time t (the
ancestral partition process of the levels is the [n]-coalescent, and
clusters are ancestor position plus independent Lévy increments), while
costing one step per merger instead of one per lookdown event.

Blocks of the ancestral partition at lookback s are ordered by least
element, so block i is the one whose ancestor sits on level i.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .coalescent import UniformStream, count_frequent_blocks, merge_events
from .empirical import BallQuery, EmpiricalMeasure, Enlargement
from .errors import DomainError
from .levy import LevySpec, convolve_support, sample_increments, small_ball_prob
from .measure import LambdaMeasure
from .quadrature import integrate_unit_interval
from .rates import rate_table
from .speed import Classification, has_dust


# -- genealogy sampler ------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Snapshot:
    """Ancestral partition at lookback s: 1-based block label per level and
    the ancestors' positions at time t - s (row i-1 for block i)."""

    s: float
    labels: np.ndarray
    ancestor_positions: np.ndarray

    @property
    def block_count(self) -> int:
        return self.ancestor_positions.shape[0]

    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.block_count + 1)[1:]


@dataclass(frozen=True, eq=False)
class Population:
    t: float
    positions: np.ndarray  # (n, d)
    snapshots: dict  # s -> Snapshot

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.positions)


def _initial_sample(mu0, m: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(mu0, EmpiricalMeasure):
        return mu0.sample(m, rng)
    if callable(mu0):
        return np.asarray(mu0(rng, m), dtype=float).reshape(m, -1)
    raise DomainError("mu0 must be an EmpiricalMeasure or a sampler(rng, m)")


def sample_population(
    lam: LambdaMeasure,
    levy: LevySpec | None,
    mu0,
    n: int,
    t: float,
    rng: np.random.Generator,
    lookbacks: Sequence[float] = (),
) -> Population:
    """Types of levels 1..n at time t, plus ancestral snapshots at the given lookbacks."""
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    if not t > 0:
        raise DomainError("t must be positive")
    looks = sorted({float(s) for s in lookbacks} | {float(t)})
    if looks[0] < 0 or looks[-1] > t:
        raise DomainError("lookbacks must lie in [0, t]")
    n = int(n)
    stream = UniformStream(rng)
    parent = [-1] * n
    born = [0.0] * n  # backward creation time of each node
    active = list(range(n))
    marks: dict[float, list[int]] = {}
    j = 0

    def mark(s: float) -> None:
        # unary nodes at lookback s record the ancestors' positions there
        ids = list(range(len(parent), len(parent) + len(active)))
        for node, new in zip(active, ids):
            parent[node] = new
        parent.extend([-1] * len(ids))
        born.extend([s] * len(ids))
        active[:] = ids
        marks[s] = ids

    for time, idx in merge_events(rate_table(lam), n, t, stream):
        while j < len(looks) and looks[j] < time:
            mark(looks[j])
            j += 1
        new = len(parent)
        parent.append(-1)
        born.append(time)
        for i in idx:
            parent[active[i]] = new
        active[idx[0]] = new
        for i in reversed(idx[1:]):
            del active[i]
    while j < len(looks):
        mark(looks[j])
        j += 1

    parent_a = np.asarray(parent, dtype=np.int64)
    born_a = np.asarray(born)
    roots = np.flatnonzero(parent_a < 0)
    d = levy.dim if levy is not None else None
    x0 = _initial_sample(mu0, roots.size, rng)
    if d is not None and x0.shape[1] != d:
        raise DomainError("mu0 and the Lévy spec disagree on dimension")
    d = x0.shape[1]
    value = np.zeros((parent_a.size, d))
    value[roots] = x0
    edges = np.flatnonzero(parent_a >= 0)
    if levy is not None and not levy.is_trivial and edges.size:
        value[edges] = sample_increments(levy, born_a[parent_a[edges]] - born_a[edges], rng)
    # accumulate increments up to the roots by pointer jumping
    up = parent_a.copy()
    while True:
        has = up >= 0
        if not has.any():
            break
        value[has] = value[has] + value[up[has]]
        up[has] = up[up[has]]

    snapshots = {}
    for s in looks:
        ids = np.asarray(marks[s])
        # leaf -> its unary node at s: climb while the parent was born no later than s
        anc = np.arange(n)
        while True:
            par = parent_a[anc]
            step = (par >= 0) & (born_a[np.maximum(par, 0)] <= s)
            if not step.any():
                break
            anc[step] = par[step]
        index = np.empty(parent_a.size, dtype=np.int64)
        index[ids] = np.arange(1, ids.size + 1)
        snapshots[s] = Snapshot(s, index[anc], value[ids])
    return Population(float(t), value[:n].copy(), snapshots)


# -- replica plumbing -------------------------------------------------------
def map_replicas(func: Callable[[int], object], replicas: int, workers: int = 1) -> list:
    """[func(0), ..., func(replicas - 1)] in index order, optionally in worker processes."""
    if workers <= 1 or replicas < 2:
        return [func(i) for i in range(replicas)]
    chunk = max(1, replicas // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(replicas), chunksize=chunk))


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    mean = math.fsum(v) / v.size
    if v.size < 2:
        return mean, math.inf
    var = math.fsum((v - mean) ** 2) / (v.size - 1)
    return mean, math.sqrt(var / v.size)


def _z(est: float, se: float, target: float, tse: float) -> float:
    comb = math.hypot(se, tse)
    if comb == 0.0:
        return 0.0 if est == target else math.copysign(math.inf, est - target)
    return (est - target) / comb


@dataclass
class MomentReport:
    observable: str
    estimate: float
    stderr: float
    target: float
    target_stderr: float
    z: float
    details: dict = field(default_factory=dict)

    def passed(self, threshold: float = 3.0) -> bool:
        return abs(self.z) < threshold

    def to_dict(self) -> dict:
        return asdict(self)


# -- moment formulas --------------------------------------------------------
def _moment_replica(i, lam, levy, mu0, n, t, seed, fns):
    pop = sample_population(lam, levy, mu0, n, t, rngmod.replica_rng(seed, i))
    return [np.asarray(f(pop.positions), dtype=float) for f in fns]


def population_values(lam, levy, mu0, n, t, fns, replicas, seed, workers=1) -> list[list[np.ndarray]]:
    """Per replica, the arrays f(X_1(t)), ..., f(X_n(t)) for each f in fns."""
    func = partial(_moment_replica, lam=lam, levy=levy, mu0=mu0, n=n, t=t, seed=seed, fns=tuple(fns))
    return map_replicas(func, replicas, workers)


def semigroup_mu(levy, mu0, t, phi, m, rng) -> tuple[float, float, np.ndarray]:
    """<T_t phi, mu0> by Monte Carlo: mean, stderr and the raw values."""
    x = _initial_sample(mu0, m, rng)
    if levy is not None and t > 0:
        x = x + sample_increments(levy, t, rng, m)
    vals = np.asarray(phi(x), dtype=float)
    mean, se = _mean_se(vals)
    return mean, se, vals


def first_moment_check(
    lam, levy, mu0, t, phi, n, replicas, seed, *, semigroup_samples=200_000, workers=1, values=None, name="phi"
) -> MomentReport:
    """E<phi, Z_t^(n)> against <T_t phi, mu0>, both by independent Monte Carlo."""
    if values is None:
        values = [v[0] for v in population_values(lam, levy, mu0, n, t, [phi], replicas, seed, workers)]
    lhs = [math.fsum(v) / v.size for v in values]
    est, se = _mean_se(lhs)
    tgt, tse, _ = semigroup_mu(levy, mu0, t, phi, semigroup_samples, rngmod.replica_rng(seed, 0, rngmod.SEMIGROUP))
    return MomentReport(
        f"E<{name}, Z_t>", est, se, tgt, tse, _z(est, se, tgt, tse),
        {"n": n, "t": t, "replicas": len(values), "sigma": lam.total_mass},
    )


def _pair_term(levy, mu0, t, s, phi, psi_fn, m, rng) -> np.ndarray:
    """Samples of phi(Y + W_s) psi(Y + W'_s), Y = X0 + W_{t-s}."""
    y = _initial_sample(mu0, m, rng)
    if levy is not None:
        y = y + sample_increments(levy, t - s, rng, m)
        a = y + sample_increments(levy, s, rng, m)
        b = y + sample_increments(levy, s, rng, m)
    else:
        a = b = y
    return np.asarray(phi(a), dtype=float) * np.asarray(psi_fn(b), dtype=float)


def second_moment_rhs(lam, levy, mu0, t, phi, psi_fn, seed, *, grid=32, samples=20_000, semigroup_samples=200_000):
    """exp(-sigma t) <T_t phi,mu><T_t psi,mu> + int_0^t sigma e^{-sigma s} <T_{t-s}(T_s phi T_s psi), mu> ds.

    The s-integral is a trapezoid rule on ``grid`` nodes equally spaced in
    r = 1 - exp(-sigma s), which turns the weight into Lebesgue measure on
    [0, 1 - exp(-sigma t)].  Returns (value, stderr, parts).
    """
    sigma = lam.total_mass
    e = math.exp(-sigma * t)
    a, sa, _ = semigroup_mu(levy, mu0, t, phi, semigroup_samples, rngmod.replica_rng(seed, 1, rngmod.SEMIGROUP))
    b, sb, _ = semigroup_mu(levy, mu0, t, psi_fn, semigroup_samples, rngmod.replica_rng(seed, 2, rngmod.SEMIGROUP))
    prod, prod_se = a * b, math.hypot(a * sb, b * sa)
    if sigma == 0.0:
        return prod, prod_se, {"product": prod, "phi_mean": a, "psi_mean": b, "integral_average": 0.0}
    r = np.linspace(0.0, 1.0 - e, grid)
    s_nodes = np.clip(-np.log1p(-r) / sigma, 0.0, t)
    w = np.full(grid, 1.0)
    w[0] = w[-1] = 0.5
    means, variances = [], []
    for j, s in enumerate(s_nodes):
        vals = _pair_term(levy, mu0, t, float(s), phi, psi_fn, samples, rngmod.replica_rng(seed, 100 + j, rngmod.SEMIGROUP))
        m, se = _mean_se(vals)
        means.append(m)
        variances.append(se * se)
    wsum = math.fsum(w)
    avg = math.fsum(w * np.asarray(means)) / wsum
    avg_se = math.sqrt(math.fsum(w * w * np.asarray(variances))) / wsum
    # written so that prod = avg = 1 gives exactly 1
    value = avg + e * (prod - avg)
    se = math.hypot((1.0 - e) * avg_se, e * prod_se)
    return value, se, {"product": prod, "phi_mean": a, "psi_mean": b, "integral_average": avg, "grid": grid, "s_nodes": s_nodes.tolist()}


def second_moment_check(
    lam, levy, mu0, t, phi, psi_fn, n, replicas, seed, *, grid=32, samples=20_000, workers=1, values=None,
    bound_sup=None, name="phi,psi",
) -> MomentReport:
    """E[<phi,Z_t><psi,Z_t>] (U-statistic over distinct levels) against the
    second-moment formula.

    With ``bound_sup = M`` (and psi = phi) the second-moment bound
    e^{-sigma t}<T_t phi,mu>^2 + M (1 - e^{-sigma t}) <T_t phi,mu> is also evaluated.
    """
    if values is None:
        values = population_values(lam, levy, mu0, n, t, [phi, psi_fn], replicas, seed, workers)
    ustats = []
    for vp, vq in values:
        m = vp.size
        sp, sq = math.fsum(vp), math.fsum(vq)
        ustats.append((sp * sq - math.fsum(vp * vq)) / (m * (m - 1)))
    est, se = _mean_se(ustats)
    tgt, tse, parts = second_moment_rhs(lam, levy, mu0, t, phi, psi_fn, seed, grid=grid, samples=samples)
    details = {"n": n, "t": t, "replicas": len(values), "sigma": lam.total_mass, **parts}
    if bound_sup is not None:
        sigma = lam.total_mass
        e = math.exp(-sigma * t)
        a = parts["phi_mean"]
        bound = e * a * a + bound_sup * (1.0 - e) * a
        details["bound"] = bound
        details["bound_z"] = _z(est, se, bound, tse)
    return MomentReport(f"E<{name}, Z_t>^2 (U-statistic)", est, se, tgt, tse, _z(est, se, tgt, tse), details)


# -- cluster bounds ---------------------------------------------------------
@dataclass
class Stratum:
    label: str
    count: int
    frequency: float
    bound: float
    stderr: float
    ok: bool


@dataclass
class BoundReport:
    observable: str
    strata: list
    skipped: list
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _stratum(label, hits, bounds, min_count) -> Stratum | None:
    hits = np.asarray(hits, dtype=float)
    if hits.size < min_count:
        return None
    f = float(hits.mean())
    q = float(np.mean(bounds))
    # binomial stderr at the boundary value (the null hypothesis)
    se = math.sqrt(max(q * (1.0 - q), 0.0) / hits.size)
    return Stratum(label, int(hits.size), f, q, se, f >= q - 3.0 * se)


def _finish(observable, groups, min_count, details) -> BoundReport:
    strata, skipped = [], []
    for label, (hits, bounds) in groups:
        st = _stratum(label, hits, bounds, min_count)
        if st is None:
            skipped.append({"label": label, "count": len(hits)})
            warnings.warn(f"{observable}: stratum {label} has only {len(hits)} samples; skipped", stacklevel=3)
        else:
            strata.append(st)
    return BoundReport(observable, strata, skipped, all(s.ok for s in strata), details)


def _cluster_mass_replica(i, lam, levy, mu0, n, t, s, ball, seed, p_samples):
    rng = rngmod.replica_rng(seed, i)
    pop = sample_population(lam, levy, mu0, n, t, rng, lookbacks=(s,))
    snap = pop.snapshots[s]
    inside = np.asarray(ball(pop.positions), dtype=float)
    mass = np.bincount(snap.labels, weights=inside, minlength=snap.block_count + 1)[1:] / n
    freq = snap.block_sizes() / n
    # p_i = P(ancestor_i + W_s in B), common increments for all blocks
    prng = rngmod.replica_rng(seed, i, rngmod.SMALL_BALL)
    if levy is None or levy.is_trivial:
        p = np.asarray(ball(snap.ancestor_positions), dtype=float)
    else:
        w = sample_increments(levy, s, prng, p_samples)
        p = np.array([np.asarray(ball(a + w), dtype=float).mean() for a in snap.ancestor_positions])
    return p, mass >= p * freq / 2.0


def cluster_mass_bound_check(
    lam, levy, mu0, t, s, ball, n, replicas, seed, *, p_samples=1000, bins=10, min_count=30, workers=1
) -> BoundReport:
    """P(Z_{i,s}(t,B) >= p |pi_i| / 2) >= p / 2, p = P_{X_i(t-s)}(W_s in B), stratified by p."""
    if not 0 < s <= t:
        raise DomainError("need 0 < s <= t")
    func = partial(
        _cluster_mass_replica, lam=lam, levy=levy, mu0=mu0, n=n, t=t, s=s, ball=ball, seed=seed, p_samples=p_samples
    )
    results = map_replicas(func, replicas, workers)
    p = np.concatenate([r[0] for r in results])
    hit = np.concatenate([r[1] for r in results])
    edges = np.linspace(0.0, 1.0, bins + 1)
    which = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, bins - 1)
    groups = []
    for b in range(bins):
        sel = which == b
        groups.append((f"p in [{edges[b]:.1f},{edges[b + 1]:.1f}]", (hit[sel], p[sel] / 2.0)))
    return _finish("cluster mass bound", groups, min_count, {"n": n, "t": t, "s": s, "replicas": replicas, "blocks": int(p.size)})


def _cluster_hit_replica(i, lam, levy, mu0, n, t, region, b, seed):
    pop = sample_population(lam, levy, mu0, n, t, rngmod.replica_rng(seed, i), lookbacks=(t,))
    snap = pop.snapshots[t]
    big = count_frequent_blocks(snap.block_sizes().tolist(), n, 2.0 * b)
    mass = float(np.asarray(region(pop.positions), dtype=float).mean())
    return big, mass


def cluster_hit_bound_check(
    lam, levy, mu0, t, b_points, eps, b, n, replicas, seed, *, p_samples=200_000, min_count=30, workers=1
) -> BoundReport:
    """P(Z_t(B_eps) >= b p(t,eps)) >= 1 - (1 - mu0(B) p(t,eps) / 2)^{N_t^t(2b)}, stratified by N."""
    if not 0 < b <= 0.5:
        raise DomainError("b must lie in (0, 1/2]")
    region = Enlargement(tuple(map(tuple, np.atleast_2d(np.asarray(b_points, dtype=float)).reshape(len(b_points), -1))), eps)
    exact = Enlargement(region.points, 1e-9)
    mu_b = mu0.integrate(exact) if isinstance(mu0, EmpiricalMeasure) else float("nan")
    if levy is None or levy.is_trivial:
        p_eps, p_se = 1.0, 0.0
    else:
        est = small_ball_prob(levy, t, eps, p_samples, rngmod.replica_rng(seed, 0, rngmod.SMALL_BALL))
        p_eps, p_se = est.value, est.stderr
    func = partial(_cluster_hit_replica, lam=lam, levy=levy, mu0=mu0, n=n, t=t, region=region, b=b, seed=seed)
    results = map_replicas(func, replicas, workers)
    big = np.array([r[0] for r in results])
    hit = np.array([r[1] >= b * p_eps for r in results], dtype=float)
    bound = 1.0 - (1.0 - mu_b * p_eps / 2.0) ** big
    groups = [(f"N={k}", (hit[big == k], bound[big == k])) for k in sorted(set(big.tolist()))]
    groups.append(("all", (hit, bound)))
    return _finish(
        "cluster hit bound", groups, min_count,
        {"n": n, "t": t, "eps": eps, "b": b, "mu_B": mu_b, "p_t_eps": p_eps, "p_t_eps_stderr": p_se, "replicas": replicas},
    )


# -- support propagation ----------------------------------------------------
@dataclass
class SupportReport:
    n: int
    t: float
    k: int
    eps: float
    replicas: int
    hit_fraction: float
    stderr: float
    atom_fraction: float
    atom_stderr: float
    queries: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _support_replica(i, lam, levy, mu0, n, t, k, eps, floor, queries, seed):
    pop = sample_population(lam, levy, mu0, n, t, rngmod.replica_rng(seed, i))
    z = pop.measure().merged()
    conv = convolve_support(levy.jump_atoms(), z, k)
    keep = conv.weights > floor * conv.total_mass
    hits = z.hits(conv.points[keep], eps)
    w = conv.weights[keep]
    weighted = math.fsum(w * hits) / math.fsum(w) if w.size else 1.0
    plain = float(hits.mean()) if hits.size else 1.0
    qh = z.hits(queries, eps).astype(float) if queries is not None else None
    return weighted, plain, qh


def support_propagation_probe(
    lam, levy: LevySpec, mu0, t, k, eps, n, replicas, seed, *, weight_floor=0.0, query_points=None, workers=1
) -> SupportReport:
    """How much of nu^(k) * Z_t^(n) lies within eps of the support of Z_t^(n).

    ``hit_fraction`` weights the convolved atoms by their mass,
    ``atom_fraction`` counts them equally; query points report P(Z_t(B(y, eps)) > 0).
    """
    if not levy.point_mass_jumps or not levy.jumps:
        raise DomainError("support probe needs a finite point-mass jump measure")
    queries = None
    if query_points is not None:
        queries = np.asarray(query_points, dtype=float).reshape(-1, levy.dim)
    func = partial(
        _support_replica, lam=lam, levy=levy, mu0=mu0, n=n, t=t, k=k, eps=eps, floor=weight_floor,
        queries=queries, seed=seed,
    )
    results = map_replicas(func, replicas, workers)
    hf, hse = _mean_se([r[0] for r in results])
    af, ase = _mean_se([r[1] for r in results])
    qrep = []
    if queries is not None:
        qh = np.stack([r[2] for r in results])
        for j, y in enumerate(queries):
            p, pse = _mean_se(qh[:, j])
            qrep.append({"point": y.tolist(), "probability": p, "stderr": pse})
    return SupportReport(n, t, k, eps, replicas, hf, hse, af, ase, qrep)


# -- dust regime ------------------------------------------------------------
@dataclass
class DustReport:
    n: int
    t: float
    replicas: int
    singleton_fraction: float
    stderr: float
    dust_rate: float
    ks_statistic: float
    ks_pvalue: float
    collapse_fraction: float | None = None
    collapse_lower_bound: float | None = None
    collapse_z: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _dust_replica(i, lam, levy, mu0, n, t, seed):
    pop = sample_population(lam, levy, mu0, n, t, rngmod.replica_rng(seed, i), lookbacks=(t,))
    snap = pop.snapshots[t]
    sizes = snap.block_sizes()
    single = sizes[snap.labels - 1] == 1
    disp = pop.positions[single] - snap.ancestor_positions[snap.labels[single] - 1]
    return float(single.mean()), disp, snap.block_count


def dust_regime_probe(lam: LambdaMeasure, levy, mu0, t, n, replicas, seed, *, workers=1) -> DustReport:
    """Singleton-block fraction at lookback t and the law of singleton displacements."""
    verdict = has_dust(lam)
    if verdict is not Classification.YES:
        raise DomainError(f"dust probe needs a Lambda with dust (classification: {verdict.value})")
    func = partial(_dust_replica, lam=lam, levy=levy, mu0=mu0, n=n, t=t, seed=seed)
    results = map_replicas(func, replicas, workers)
    frac, se = _mean_se([r[0] for r in results])
    disp = np.concatenate([r[1] for r in results]) if results else np.zeros((0, 1))
    rate = math.fsum([m / x for x, m in lam.atoms]) + lam.top_mass
    if lam.has_continuous_part:
        rate += integrate_unit_interval(lambda x: lam.interior_density(x) / x)
    ks_stat, ks_p = math.nan, math.nan
    if disp.shape[0] >= 2 and levy is not None and not levy.is_trivial:
        fresh = sample_increments(levy, t, rngmod.replica_rng(seed, 0, rngmod.ORACLE), min(disp.shape[0], 200_000))
        res = stats.ks_2samp(disp[:, 0], fresh[:, 0])
        ks_stat, ks_p = float(res.statistic), float(res.pvalue)
    report = DustReport(n, t, replicas, frac, se, rate, ks_stat, ks_p)
    if lam.top_mass > 0:
        one = np.array([r[2] == 1 for r in results], dtype=float)
        cf, cse = _mean_se(one)
        lower = 1.0 - math.exp(-lam.top_mass * t)
        report.collapse_fraction = cf
        report.collapse_lower_bound = lower
        tse = math.sqrt(lower * (1 - lower) / len(results))
        report.collapse_z = _z(cf, 0.0, lower, tse)
    return report
