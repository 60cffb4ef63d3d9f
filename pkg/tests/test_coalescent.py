from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvlab.coalescent import (
    CoalescentPath,
    Partition,
    UniformStream,
    blocks_with_frequency,
    count_frequent_blocks,
    random_subset,
    simulate_block_counts,
    simulate_coalescent,
)
from fvlab.errors import DomainError
from fvlab.measure import parse_lambda


def test_partition_basics():
    p = Partition(((3, 1), (2,), (4, 5)), 5)
    assert p.blocks == ((1, 3), (2,), (4, 5))
    assert p.block_index(5) == 3
    merged = p.merge([1, 3])
    assert merged.blocks == ((1, 3, 4, 5), (2,))
    assert merged.is_coarser_or_equal(p) and not p.is_coarser_or_equal(merged)
    assert Partition.from_labels([2, 1, 2, 3]).blocks == ((1, 3), (2,), (4,))
    with pytest.raises(DomainError):
        Partition(((1,), (1, 2)), 2)
    with pytest.raises(DomainError):
        p.merge([2])


def test_path_validation():
    with pytest.raises(DomainError):
        CoalescentPath(3, math.inf, ((0.5, (1, 4)),))
    with pytest.raises(DomainError):
        CoalescentPath(3, math.inf, ((0.5, (1, 2)), (0.4, (1, 2))))
    with pytest.raises(DomainError):
        CoalescentPath(2, math.inf, ((0.5, (1, 2)), (0.6, (1, 2))))


def test_path_queries():
    path = CoalescentPath(4, math.inf, ((0.5, (2, 4)), (1.0, (1, 2)), (2.0, (1, 2))))
    assert path.block_count(0.7) == 3
    assert path.block_counts([0.1, 0.5, 1.5, 3.0]).tolist() == [4, 3, 2, 1]
    assert path.partition_at(1.5).blocks == ((1, 2, 4), (3,))
    assert path.merge_time([2, 4]) == 0.5
    assert path.merge_time([1, 2]) == 1.0
    assert path.merge_time([1, 3]) == 2.0
    assert path.first_event(2) == (1.0, frozenset({1, 2}))
    assert blocks_with_frequency(path, 1.5, 0.5) == 1
    assert count_frequent_blocks([3, 1], 4, 0.25) == 2


@settings(max_examples=30, deadline=None)
@given(b=st.integers(2, 40), data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_random_subset_shape(b, data, seed):
    k = data.draw(st.integers(2, b))
    idx = random_subset(b, k, UniformStream(np.random.default_rng(seed)))
    assert len(idx) == k and len(set(idx)) == k and all(0 <= i < b for i in idx) and idx == sorted(idx)


@settings(max_examples=25, deadline=None)
@given(spec=st.sampled_from(["kingman:1", "beta:1.5", "uniform:1", "atoms:0.5@0.3,0.5@0.6", "atoms:1@1"]),
       n=st.integers(1, 30), seed=st.integers(0, 10**6))
def test_paths_are_valid_and_monotone(spec, n, seed):
    path = simulate_coalescent(parse_lambda(spec), n, 5.0, np.random.default_rng(seed))
    counts = path.block_counts(np.linspace(0, 5, 11))
    assert counts[0] == n and np.all(np.diff(counts) <= 0) and counts[-1] >= 1
    parts = [path.partition_at(t) for t in (0.0, 1.0, 5.0)]
    assert parts[1].is_coarser_or_equal(parts[0]) and parts[2].is_coarser_or_equal(parts[1])


def test_block_counts_match_path_law():
    lam = parse_lambda("kingman:1")
    times = [0.1, 0.5]
    a = np.array([simulate_block_counts(lam, 10, times, np.random.default_rng(i)) for i in range(3000)])
    b = np.array([simulate_coalescent(lam, 10, 1.0, np.random.default_rng(10**6 + i)).block_counts(times) for i in range(3000)])
    se = np.sqrt(a.var(axis=0) / 3000 + b.var(axis=0) / 3000)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 4 * se)


def test_determinism_and_errors():
    lam = parse_lambda("beta:1.5")
    p1 = simulate_coalescent(lam, 20, 1.0, np.random.default_rng(3))
    p2 = simulate_coalescent(lam, 20, 1.0, np.random.default_rng(3))
    assert p1 == p2
    with pytest.raises(DomainError):
        simulate_coalescent(lam, 0)
    with pytest.raises(DomainError):
        simulate_coalescent(lam, 3, 0.0)
