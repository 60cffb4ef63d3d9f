from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvlab.coalescent import UniformStream
from fvlab.empirical import EmpiricalMeasure
from fvlab.errors import DomainError, EventCapExceeded
from fvlab.levy import parse_levy
from fvlab.lookdown import (
    BernoulliThinning,
    LookdownEvent,
    ancestral_partition,
    cluster_measure,
    empirical_measure,
    event_log_of,
    format_event_log,
    lookdown_events,
    parse_event_log,
    read_event_log,
    replay_positions,
    simulate_lookdown,
    source_levels,
    write_event_log,
)
from fvlab.measure import parse_lambda
from fvlab.rates import total_event_rate

MIXED = ["kingman:1", "beta:1.5", "atoms:0.5@0.3,0.5@0.6", "kingman:0.5+atoms:1@1", "uniform:1"]


def test_shift_map_pair():
    # n=5, pair (2,4): levels 1,2,3 keep, 4 copies 2, 5 takes old 4
    assert (source_levels(5, (2, 4)) + 1).tolist() == [1, 2, 3, 2, 4]


def test_shift_map_multiple():
    # n=7, J={1,3,4}: 1,2 keep; 3,4 copy 1; 5 <- 3; 6 <- 4; 7 <- 5
    assert (source_levels(7, (1, 3, 4)) + 1).tolist() == [1, 2, 1, 1, 3, 4, 5]
    assert (source_levels(80, (1, 80)) + 1).tolist()[-1] == 1


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 40), data=st.data())
def test_shift_map_properties(n, data):
    levels = sorted(data.draw(st.sets(st.integers(1, n), min_size=2, max_size=n)))
    src = source_levels(n, levels) + 1
    p = levels[0]
    assert all(src[l - 1] == p for l in levels)
    assert all(src[l - 1] <= l for l in range(1, n + 1))  # ancestors never sit above
    others = [src[l - 1] for l in range(1, n + 1) if l not in levels]
    assert others == sorted(others) and len(set(others)) == len(others)
    # each pre-event level survives unless it was pushed past n
    assert set(src.tolist()) == set(range(1, n - len(levels) + 2))


def test_event_validation():
    with pytest.raises(DomainError):
        LookdownEvent(1.0, "P", (1, 2, 3))
    with pytest.raises(DomainError):
        LookdownEvent(1.0, "M", (2, 1))
    with pytest.raises(DomainError):
        LookdownEvent(0.0, "M", (1, 2))


@pytest.mark.parametrize("spec", MIXED)
def test_event_rate_matches_subset_rate(spec):
    lam = parse_lambda(spec)
    n = 6
    stream = UniformStream(np.random.default_rng(0))
    times = [ev.time for _, ev in zip(range(20000), lookdown_events(lam, n, math.inf, stream))]
    rate = 1.0 / np.mean(np.diff([0.0] + times))
    assert rate == pytest.approx(total_event_rate(lam, n), rel=0.05)
    assert BernoulliThinning(lam, n).rate == pytest.approx(total_event_rate(lam, n), rel=1e-6)


def test_replay_is_exact():
    lam = parse_lambda("beta:1.5+kingman:1")
    levy = parse_levy("brownian:sigma=1+cpois:rate=2,jump=point:1;-1")
    traj = simulate_lookdown(12, lam, levy, EmpiricalMeasure.point([0.0]), [0.1, 0.5, 1.0], np.random.default_rng(4))
    again = replay_positions(traj)
    for t in traj.sample_times:
        assert np.array_equal(again[t], traj.positions_at(t))
    z = empirical_measure(traj, 1.0)
    assert z.total_mass == 1.0 and len(z) == 12


def test_types_are_inherited():
    # no mutation: every type at time t is one of the initial types, and level 1 never changes
    x0 = np.arange(10, dtype=float)[:, None]
    traj = simulate_lookdown(10, parse_lambda("kingman:1"), None, x0, [0.5, 2.0], np.random.default_rng(0))
    for t in traj.sample_times:
        pos = traj.positions_at(t)[:, 0]
        assert set(pos.tolist()) <= set(range(10)) and pos[0] == 0.0
        part = ancestral_partition(traj, t, t)
        assert all(pos[j - 1] == part.ancestor_level[j - 1] - 1 for j in range(1, 11))


def test_cluster_measure_sums_to_total():
    levy = parse_levy("brownian:sigma=1")
    traj = simulate_lookdown(20, parse_lambda("beta:1.5"), levy, EmpiricalMeasure.point([0.0]), [1.0], np.random.default_rng(5))
    part = ancestral_partition(traj, 1.0, 0.4)
    one = lambda x: np.ones(len(x))
    total = sum(cluster_measure(traj, 1.0, 0.4, i, one) for i in range(1, len(part.blocks) + 1))
    assert total == pytest.approx(1.0)
    with pytest.raises(DomainError):
        cluster_measure(traj, 1.0, 0.4, len(part.blocks) + 1, one)


@pytest.mark.parametrize("spec", MIXED)
def test_label_invariant(spec):
    lam = parse_lambda(spec)
    rng = np.random.default_rng(9)
    for i in range(30):
        n = int(rng.integers(2, 20))
        traj = simulate_lookdown(n, lam, None, np.zeros((n, 1)), [1.5], np.random.default_rng(i))
        for _ in range(3):
            t = float(rng.uniform(0, 1.5))
            assert ancestral_partition(traj, t, float(rng.uniform(0, t)), check=False).labels_match_levels()


def test_event_log_round_trip(tmp_path):
    traj = simulate_lookdown(
        8, parse_lambda("kingman:1+atoms:0.5@0.4"), parse_levy("brownian:sigma=1"),
        EmpiricalMeasure.point([0.0]), [1.0], np.random.default_rng(1), seed=11,
    )
    log = event_log_of(traj)
    text = format_event_log(log)
    assert text.startswith("# fvlab-eventlog 1\n")
    assert parse_event_log(text) == log
    path = tmp_path / "events.log"
    write_event_log(path, log)
    assert read_event_log(path) == log
    with pytest.raises(DomainError):
        parse_event_log("not a log")
    with pytest.raises(DomainError):
        parse_event_log("# fvlab-eventlog 1\n# n=3\n0.5 Q 1 2\n")


def test_event_cap():
    with pytest.raises(EventCapExceeded):
        simulate_lookdown(50, parse_lambda("kingman:1"), None, np.zeros((50, 1)), [5.0], np.random.default_rng(0), event_cap=10)


def test_bad_inputs():
    lam = parse_lambda("kingman:1")
    with pytest.raises(DomainError):
        simulate_lookdown(3, lam, None, np.zeros((4, 1)), [1.0], np.random.default_rng(0))
    with pytest.raises(DomainError):
        simulate_lookdown(3, lam, None, np.zeros((3, 1)), [1.0, 0.5], np.random.default_rng(0))
    with pytest.raises(DomainError):
        simulate_lookdown(3, lam, parse_levy("brownian:sigma=1,d=2"), np.zeros((3, 1)), [1.0], np.random.default_rng(0))
