"""Partitions of [n] and simulation of the Lambda-coalescent restricted to [n]."""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError
from .measure import LambdaMeasure
from .rates import RateTable, rate_table


@dataclass(frozen=True)
class Partition:
    """Partition of [n] = {1..n}; blocks sorted and ordered by least element."""

    blocks: tuple[tuple[int, ...], ...]
    n: int

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise DomainError("blocks must be nonempty")
        blocks = tuple(sorted(blocks, key=lambda b: b[0]))
        seen = sorted(x for b in blocks for x in b)
        if seen != list(range(1, self.n + 1)):
            raise DomainError("blocks must be disjoint and cover [n]")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(tuple((i,) for i in range(1, n + 1)), n)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        """Blocks are the level sets of ``labels`` (indexed by element 1..n)."""
        groups: dict[int, list[int]] = {}
        for elem, lab in enumerate(labels, start=1):
            groups.setdefault(lab, []).append(elem)
        return cls(tuple(tuple(g) for g in groups.values()), len(labels))

    def __len__(self) -> int:
        return len(self.blocks)

    def block_index(self, element: int) -> int:
        """1-based index of the block containing ``element``."""
        for i, block in enumerate(self.blocks, start=1):
            if element in block:
                return i
        raise DomainError(f"{element} not in [1, {self.n}]")

    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def frequencies(self) -> list[float]:
        return [len(b) / self.n for b in self.blocks]

    def merge(self, indices: Sequence[int]) -> "Partition":
        """Merge the blocks at the given 1-based indices."""
        idx = sorted(set(indices))
        if len(idx) < 2 or idx[0] < 1 or idx[-1] > len(self.blocks):
            raise DomainError(f"bad merge indices {indices}")
        merged = tuple(x for i in idx for x in self.blocks[i - 1])
        rest = [b for i, b in enumerate(self.blocks, start=1) if i not in idx]
        return Partition(tuple(rest) + (merged,), self.n)

    def is_coarser_or_equal(self, other: "Partition") -> bool:
        """Every block of ``other`` lies inside a block of self."""
        where = {}
        for i, b in enumerate(self.blocks):
            for x in b:
                where[x] = i
        return all(len({where[x] for x in b}) == 1 for b in other.blocks)


@dataclass(frozen=True)
class CoalescentPath:
    """Event record of a coalescent on [n]; merged indices are 1-based block positions."""

    initial_n: int
    horizon: float
    events: tuple[tuple[float, tuple[int, ...]], ...]

    def __post_init__(self):
        b = self.initial_n
        last = 0.0
        for time, idx in self.events:
            if not time > last:
                raise DomainError("event times must be strictly increasing and positive")
            if len(idx) < 2 or len(set(idx)) != len(idx) or min(idx) < 1 or max(idx) > b:
                raise DomainError(f"invalid merge {idx} among {b} blocks")
            if b == 1:
                raise DomainError("no events are allowed after absorption")
            b -= len(idx) - 1
            last = time

    @property
    def event_times(self) -> list[float]:
        return [t for t, _ in self.events]

    def block_count(self, t: float) -> int:
        k = bisect_right(self.event_times, t)
        return self.initial_n - sum(len(idx) - 1 for _, idx in self.events[:k])

    def block_counts(self, times: Sequence[float]) -> np.ndarray:
        times_sorted = self.event_times
        drops = np.cumsum([0] + [len(idx) - 1 for _, idx in self.events])
        pos = np.searchsorted(times_sorted, np.asarray(times, dtype=float), side="right")
        return self.initial_n - drops[pos]

    def partition_at(self, t: float) -> Partition:
        blocks = [[i] for i in range(1, self.initial_n + 1)]
        for time, idx in self.events:
            if time > t:
                break
            _merge_in_place(blocks, idx)
        return Partition(tuple(tuple(b) for b in blocks), self.initial_n)

    def merge_time(self, labels: Sequence[int]) -> float:
        """First time all ``labels`` share a block (inf if never on the path)."""
        pos = {lab: lab for lab in labels}
        for time, idx in self.events:
            head = idx[0]
            removed = idx[1:]
            members = set(idx)
            for lab, p in pos.items():
                if p in members:
                    pos[lab] = head
                else:
                    pos[lab] = p - sum(1 for r in removed if r < p)
            if len(set(pos.values())) == 1:
                return time
        return math.inf

    def first_event(self, labels_upto: int) -> tuple[float, frozenset[int]] | None:
        """First event that merges two of the labels 1..m, with the labels involved."""
        blocks = [[i] for i in range(1, self.initial_n + 1)]
        for time, idx in self.events:
            hit = [x for i in idx for x in blocks[i - 1] if x <= labels_upto]
            touched = {i for i in idx if any(x <= labels_upto for x in blocks[i - 1])}
            if len(touched) >= 2:
                return time, frozenset(hit)
            _merge_in_place(blocks, idx)
        return None


def _merge_in_place(blocks: list[list[int]], idx: Sequence[int]) -> None:
    head = idx[0] - 1
    for i in reversed(idx[1:]):
        blocks[head].extend(blocks[i - 1])
        del blocks[i - 1]
    blocks[head].sort()


class UniformStream:
    """Buffered uniforms from a numpy Generator."""

    def __init__(self, rng: np.random.Generator, chunk: int = 1024):
        self._rng = rng
        self._chunk = chunk
        self._buf = rng.random(chunk)
        self._i = 0

    def next(self) -> float:
        if self._i == self._chunk:
            self._buf = self._rng.random(self._chunk)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return float(u)

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.next()) / rate


def random_subset(b: int, k: int, stream: UniformStream) -> list[int]:
    """Uniform k-subset of {0..b-1}, sorted (Floyd's algorithm)."""
    chosen: set[int] = set()
    for j in range(b - k, b):
        r = int(stream.next() * (j + 1))
        chosen.add(j if r in chosen else r)
    return sorted(chosen)


def merge_events(
    table: RateTable, n: int, horizon: float, stream: UniformStream
) -> Iterator[tuple[float, list[int]]]:
    """Yield (time, sorted 0-based block indices) of the [n]-restricted chain.

    From b blocks: wait Exp(total rate), draw k with probability proportional to
    C(b,k) lambda_{b,k}, then merge a uniform k-subset.
    """
    b = n
    t = 0.0
    while b > 1:
        rate = table.total(b)
        if rate <= 0.0:
            return
        t += stream.exponential(rate)
        if t > horizon:
            return
        k = table.sample_k(b, stream.next())
        yield t, random_subset(b, k, stream)
        b -= k - 1


def simulate_coalescent(
    lam: LambdaMeasure, n: int, horizon: float = math.inf, rng: np.random.Generator | None = None
) -> CoalescentPath:
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    stream = UniformStream(rng)
    events = tuple(
        (t, tuple(i + 1 for i in idx)) for t, idx in merge_events(rate_table(lam), int(n), horizon, stream)
    )
    return CoalescentPath(int(n), float(horizon), events)


def simulate_block_counts(
    lam: LambdaMeasure, n: int, times: Sequence[float], rng: np.random.Generator
) -> np.ndarray:
    """Block counts of the [n]-coalescent at the given times (labels not tracked)."""
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    out = np.empty(times.size, dtype=np.int64)
    table = rate_table(lam)
    stream = UniformStream(rng)
    b, t = int(n), 0.0
    j = 0
    while j < times.size:
        rate = table.total(b) if b > 1 else 0.0
        nxt = t + stream.exponential(rate) if rate > 0.0 else math.inf
        while j < times.size and times[order[j]] < nxt:
            out[order[j]] = b
            j += 1
        if nxt == math.inf:
            break
        b -= table.sample_k(b, stream.next()) - 1
        t = nxt
    return out


def blocks_with_frequency(path: CoalescentPath, t: float, b_threshold: float) -> int:
    """Number of blocks at time t whose [n]-frequency is at least ``b_threshold``."""
    if not 0.0 <= b_threshold <= 1.0:
        raise DomainError("frequency threshold must lie in [0, 1]")
    part = path.partition_at(t)
    return count_frequent_blocks(part.sizes(), part.n, b_threshold)


def count_frequent_blocks(sizes: Sequence[int], n: int, b_threshold: float) -> int:
    # size / n >= b, guarded against float noise in b * n
    need = b_threshold * n
    return sum(1 for s in sizes if s >= need - 1e-9 * max(1.0, need))
