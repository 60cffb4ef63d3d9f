from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from fvlab import rng as rngmod
from fvlab.empirical import BallQuery, Constant, EmpiricalMeasure
from fvlab.errors import DomainError
from fvlab.fv import (
    cluster_hit_bound_check,
    cluster_mass_bound_check,
    dust_regime_probe,
    first_moment_check,
    map_replicas,
    sample_population,
    second_moment_check,
    support_propagation_probe,
)
from fvlab.levy import parse_levy
from fvlab.lookdown import ancestral_partition, simulate_lookdown
from fvlab.measure import parse_lambda

ORIGIN = EmpiricalMeasure.point([0.0])


def test_population_structure():
    lam = parse_lambda("beta:1.5")
    pop = sample_population(lam, parse_levy("brownian:sigma=1"), ORIGIN, 50, 1.0, np.random.default_rng(0), lookbacks=(0.3,))
    assert pop.positions.shape == (50, 1) and pop.measure().total_mass == 1.0
    assert set(pop.snapshots) == {0.3, 1.0}
    for snap in pop.snapshots.values():
        assert snap.block_sizes().sum() == 50 and snap.block_sizes().min() >= 1
        # labels are ordered by least element
        firsts = [int(np.flatnonzero(snap.labels == i)[0]) for i in range(1, snap.block_count + 1)]
        assert firsts == sorted(firsts) and snap.labels[0] == 1
    assert pop.snapshots[1.0].block_count <= pop.snapshots[0.3].block_count


def test_no_mutation_keeps_root_types():
    pop = sample_population(parse_lambda("kingman:1"), None, EmpiricalMeasure.uniform([[1.0], [2.0]]), 30, 2.0,
                            np.random.default_rng(1), lookbacks=(2.0,))
    snap = pop.snapshots[2.0]
    assert np.array_equal(pop.positions, snap.ancestor_positions[snap.labels - 1])


def _lookdown_stats(lam, levy, n, t, s, reps, seed):
    out = []
    for i in range(reps):
        traj = simulate_lookdown(n, lam, levy, ORIGIN, [t], np.random.default_rng(seed + i))
        part = ancestral_partition(traj, t, s)
        out.append((len(part.blocks), tuple(part.ancestor_level), float(traj.positions_at(t)[:, 0].var())))
    return out


def test_genealogy_sampler_matches_lookdown():
    lam, levy = parse_lambda("kingman:1+atoms:0.5@0.5"), parse_levy("brownian:sigma=1")
    n, t, s, reps = 3, 1.0, 0.5, 4000
    look = _lookdown_stats(lam, levy, n, t, s, reps, 0)
    gen = []
    for i in range(reps):
        pop = sample_population(lam, levy, ORIGIN, n, t, np.random.default_rng(10**6 + i), lookbacks=(s,))
        gen.append((pop.snapshots[s].block_count, tuple(pop.snapshots[s].labels.tolist()), float(pop.positions[:, 0].var())))
    for k in (0, 2):
        a = np.array([g[k] for g in look], dtype=float)
        b = np.array([g[k] for g in gen], dtype=float)
        se = math.sqrt(a.var() / reps + b.var() / reps)
        assert abs(a.mean() - b.mean()) < 4 * se
    ca, cb = Counter(g[1] for g in look), Counter(g[1] for g in gen)
    for key in set(ca) | set(cb):
        pa, pb = ca[key] / reps, cb[key] / reps
        assert abs(pa - pb) < 4 * math.sqrt((pa * (1 - pa) + pb * (1 - pb)) / reps) + 1e-3


def test_identity_moments_are_exact():
    lam, levy = parse_lambda("beta:1.5"), parse_levy("brownian:sigma=1")
    first = first_moment_check(lam, levy, ORIGIN, 0.5, Constant(1.0), 20, 10, seed=0, semigroup_samples=100, name="1")
    assert first.estimate == 1.0 and first.stderr == 0.0 and first.target == 1.0 and first.z == 0.0
    second = second_moment_check(lam, levy, ORIGIN, 0.5, Constant(1.0), Constant(1.0), 20, 10, seed=0, grid=4, samples=100)
    assert second.estimate == 1.0 and second.target == 1.0 and second.z == 0.0


def test_moments_small_run():
    lam, levy = parse_lambda("kingman:1"), parse_levy("brownian:sigma=1")
    ball = BallQuery((0.0,), 1.0)
    r = first_moment_check(lam, levy, ORIGIN, 0.5, ball, 100, 200, seed=3)
    assert abs(r.z) < 4
    r2 = second_moment_check(lam, levy, ORIGIN, 0.5, ball, ball, 100, 200, seed=3, grid=8, samples=5000, bound_sup=1.0)
    assert abs(r2.z) < 4 and r2.details["bound"] >= r2.target - 4 * r2.target_stderr


def test_zero_lambda_second_moment_is_product():
    lam, levy = parse_lambda("zero"), parse_levy("brownian:sigma=1")
    ball = BallQuery((0.0,), 1.0)
    r = second_moment_check(lam, levy, ORIGIN, 0.5, ball, ball, 50, 100, seed=0, samples=1000)
    assert r.details["integral_average"] == 0.0 and abs(r.z) < 4


def test_map_replicas_worker_independent():
    lam, levy = parse_lambda("beta:1.5"), parse_levy("brownian:sigma=1")
    a = first_moment_check(lam, levy, ORIGIN, 0.5, BallQuery((0.0,), 1.0), 50, 8, seed=7, semigroup_samples=1000, workers=1)
    b = first_moment_check(lam, levy, ORIGIN, 0.5, BallQuery((0.0,), 1.0), 50, 8, seed=7, semigroup_samples=1000, workers=2)
    assert a == b
    assert map_replicas(abs, 5, 1) == [0, 1, 2, 3, 4]


def test_replica_rng_streams_differ():
    x = rngmod.replica_rng(1, 0).random(3)
    assert np.array_equal(x, rngmod.replica_rng(1, 0).random(3))
    assert not np.array_equal(x, rngmod.replica_rng(1, 1).random(3))
    assert not np.array_equal(x, rngmod.replica_rng(1, 0, rngmod.ORACLE).random(3))


def test_support_anchor_zero_lambda():
    lam, levy = parse_lambda("zero"), parse_levy("cpois:rate=2,jump=point:1")
    rep = support_propagation_probe(lam, levy, ORIGIN, 0.1, 1, 0.25, 50, 400, seed=0, query_points=[[1.0]])
    p = 1 - (1 - 0.2 * math.exp(-0.2)) ** 50
    q = rep.queries[0]
    assert abs(q["probability"] - p) < 4 * math.sqrt(p * (1 - p) / 400)
    with pytest.raises(DomainError):
        support_propagation_probe(lam, parse_levy("brownian:sigma=1"), ORIGIN, 0.1, 1, 0.25, 5, 2, seed=0)


def test_dust_probe():
    with pytest.raises(DomainError):
        dust_regime_probe(parse_lambda("kingman:1"), None, ORIGIN, 0.5, 10, 5, 0)
    lam = parse_lambda("atoms:1@1")
    rep = dust_regime_probe(lam, parse_levy("brownian:sigma=1"), ORIGIN, 1.0, 20, 300, 0)
    # a single total-collapse atom: blocks are either all singletons or one block
    assert rep.dust_rate == 1.0
    assert rep.collapse_fraction == pytest.approx(1 - math.exp(-1), abs=0.1)
    assert abs(rep.singleton_fraction - math.exp(-1)) < 0.1
    zero = dust_regime_probe(parse_lambda("zero"), parse_levy("brownian:sigma=1"), ORIGIN, 0.5, 10, 20, 0)
    assert zero.singleton_fraction == 1.0 and zero.ks_pvalue > 0.001


def test_bound_checks_small():
    lam, levy = parse_lambda("kingman:1"), parse_levy("brownian:sigma=1")
    with pytest.warns(UserWarning):
        rep = cluster_mass_bound_check(lam, levy, ORIGIN, 0.5, 0.25, BallQuery((0.0,), 1.0), 40, 20, seed=0, p_samples=200)
    assert rep.strata or rep.skipped
    with pytest.raises(DomainError):
        cluster_mass_bound_check(lam, levy, ORIGIN, 0.5, 0.7, BallQuery((0.0,), 1.0), 10, 2, seed=0)
    with pytest.raises(DomainError):
        cluster_hit_bound_check(lam, levy, ORIGIN, 0.5, [[0.0]], 0.25, 0.7, 10, 2, seed=0)
