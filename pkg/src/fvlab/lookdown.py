"""Finite-n lookdown particle system with Lévy mutation.

Levels 1..n are simulated exactly: an event with participating level set J
(parent p = min J) copies the parent's type to every level in J and pushes
the other levels above p up, in order, discarding whatever leaves [n].
Pair events (Kingman part) are the |J| = 2 special case.

Mutation is applied lazily: each level remembers when its position was last
brought up to date, and is advanced only when it acts as a parent or a
sample time is reached.  Every increment is stored, so a trajectory can be
replayed exactly from its initial positions and event log.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .coalescent import Partition, UniformStream, random_subset
from .empirical import EmpiricalMeasure
from .errors import DomainError, EventCapExceeded
from .levy import LevySpec, sample_increments
from .measure import LambdaMeasure
from .quadrature import integrate_unit_interval
from .rates import rate_table

LOG_MAGIC = "# fvlab-eventlog 1"


@dataclass(frozen=True)
class LookdownEvent:
    time: float
    kind: str  # "P" (pair, Kingman part) or "M" (multiple merger)
    levels: tuple[int, ...]  # 1-based, increasing

    def __post_init__(self):
        levels = tuple(int(x) for x in self.levels)
        if self.kind not in ("P", "M"):
            raise DomainError(f"unknown event kind {self.kind!r}")
        if len(levels) < 2 or list(levels) != sorted(set(levels)) or levels[0] < 1:
            raise DomainError(f"event levels must be >= 2 distinct increasing positive ints, got {self.levels}")
        if self.kind == "P" and len(levels) != 2:
            raise DomainError("pair events involve exactly two levels")
        if not self.time > 0.0:
            raise DomainError("event times must be positive")
        object.__setattr__(self, "levels", levels)

    @property
    def parent(self) -> int:
        return self.levels[0]


def source_levels(n: int, levels: Sequence[int]) -> np.ndarray:
    if n <= 64:
        return _source_levels_cached(n, tuple(levels))
    return _source_levels(n, levels)


@lru_cache(maxsize=8192)
def _source_levels_cached(n: int, levels: tuple[int, ...]) -> np.ndarray:
    out = _source_levels(n, levels)
    out.flags.writeable = False
    return out


def _source_levels(n: int, levels: Sequence[int]) -> np.ndarray:
    """0-based pre-event level whose particle each post-event level holds.

    Level l <= p keeps its particle, l in J takes the parent's, and any
    other l > p takes pre-event level l - (#{j in J : j < l} - 1).
    This is both the forward copy map and the backward ancestor map.
    """
    src = np.arange(1, n + 1)
    in_j = np.zeros(n + 1, dtype=bool)
    in_j[list(levels)] = True
    in_j = in_j[1:]
    p = levels[0]
    below = np.cumsum(in_j) - in_j  # #{j in J : j < l}
    shifted = (src > p) & ~in_j
    src[shifted] = src[shifted] - below[shifted] + 1
    src[in_j] = p
    return src - 1


@dataclass(frozen=True, eq=False)
class LookdownTrajectory:
    n: int
    dim: int
    horizon: float
    sample_times: tuple[float, ...]
    positions: dict  # sample time -> (n, d) array
    events: tuple[LookdownEvent, ...]
    initial_positions: np.ndarray
    increments: tuple[np.ndarray, ...]
    lambda_spec: str = ""
    levy_spec: str = ""
    seed: int | None = None

    def positions_at(self, t: float) -> np.ndarray:
        try:
            return self.positions[t]
        except KeyError:
            raise DomainError(f"time {t!r} is not a sample time") from None


class _Mutation:
    """Lazy per-level mutation clock; draws or replays increments."""

    def __init__(self, levy: LevySpec | None, positions: np.ndarray, rng=None, recorded=None):
        self.levy = levy
        self.pos = positions
        self.last = np.zeros(positions.shape[0])
        self.rng = rng
        self.record: list[np.ndarray] = []
        self._replay = iter(recorded) if recorded is not None else None
        self.moving = levy is not None and not levy.is_trivial

    def _draw(self, dts: np.ndarray) -> np.ndarray:
        if self._replay is not None:
            return next(self._replay)
        inc = sample_increments(self.levy, dts, self.rng)
        self.record.append(inc)
        return inc

    def advance(self, level0: int, t: float) -> None:
        if self.moving:
            self.pos[level0] += self._draw(np.array([t - self.last[level0]]))[0]
        self.last[level0] = t

    def advance_all(self, t: float) -> None:
        if self.moving:
            self.pos += self._draw(t - self.last)
        self.last[:] = t

    def apply_event(self, n: int, ev: LookdownEvent) -> None:
        self.advance(ev.parent - 1, ev.time)
        src = source_levels(n, ev.levels)
        self.pos = self.pos[src]
        self.last = self.last[src]


def _check_times(sample_times) -> tuple[float, ...]:
    times = tuple(float(t) for t in sample_times)
    if not times:
        raise DomainError("need at least one sample time")
    if any(t < 0 for t in times) or list(times) != sorted(times):
        raise DomainError("sample times must be sorted and nonnegative")
    return times


def _run(n, sample_times, events_iter, mutation: _Mutation):
    positions: dict[float, np.ndarray] = {}
    events = []
    times = list(sample_times)
    j = 0
    for ev in events_iter:
        while j < len(times) and times[j] < ev.time:
            mutation.advance_all(times[j])
            positions[times[j]] = mutation.pos.copy()
            j += 1
        mutation.apply_event(n, ev)
        events.append(ev)
    while j < len(times):
        mutation.advance_all(times[j])
        positions[times[j]] = mutation.pos.copy()
        j += 1
    return positions, tuple(events)


def lookdown_events(lam: LambdaMeasure, n: int, horizon: float, stream: UniformStream, event_cap: int | None = None):
    """Generate lookdown events on levels 1..n up to ``horizon``.

    Pairs (i, j) fire at rate Lambda({0}) each; multiple-merger events use the
    subset-rate scheme for Lambda without its atom at 0.
    """
    pair_rate = lam.kingman_mass * n * (n - 1) / 2.0
    table = rate_table(lam.without_kingman())
    multi_rate = table.total(n) if n >= 2 else 0.0
    total = pair_rate + multi_rate
    if total <= 0.0:
        return
    t = 0.0
    count = 0
    while True:
        t += stream.exponential(total)
        if t > horizon:
            return
        count += 1
        if event_cap is not None and count > event_cap:
            raise EventCapExceeded(f"more than {event_cap} lookdown events before t={horizon}")
        if stream.next() * total < pair_rate:
            levels = random_subset(n, 2, stream)
            yield LookdownEvent(t, "P", tuple(x + 1 for x in levels))
        else:
            k = table.sample_k(n, stream.next())
            levels = random_subset(n, k, stream)
            yield LookdownEvent(t, "M", tuple(x + 1 for x in levels))


def simulate_lookdown(
    n: int,
    lam: LambdaMeasure,
    levy: LevySpec | None,
    mu0,
    sample_times: Sequence[float],
    rng: np.random.Generator,
    *,
    horizon: float | None = None,
    event_cap: int | None = None,
    seed: int | None = None,
) -> LookdownTrajectory:
    """Simulate levels 1..n from i.i.d. mu0 initial types.

    ``mu0`` is an EmpiricalMeasure (sampled i.i.d.) or an explicit (n, d)
    array of initial positions.
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    n = int(n)
    times = _check_times(sample_times)
    horizon = times[-1] if horizon is None else float(horizon)
    if horizon < times[-1]:
        raise DomainError("horizon must cover all sample times")
    if isinstance(mu0, EmpiricalMeasure):
        x0 = mu0.sample(n, rng)
    else:
        x0 = np.asarray(mu0, dtype=float)
        if x0.ndim == 1:
            x0 = x0[:, None]
        if x0.shape[0] != n:
            raise DomainError("initial positions must have n rows")
    dim = x0.shape[1]
    if levy is not None and levy.dim != dim:
        raise DomainError("Lévy dimension does not match the initial positions")
    stream = UniformStream(rng)
    mutation = _Mutation(levy, x0.copy(), rng=rng)
    positions, events = _run(n, times, lookdown_events(lam, n, horizon, stream, event_cap), mutation)
    return LookdownTrajectory(
        n=n,
        dim=dim,
        horizon=horizon,
        sample_times=times,
        positions=positions,
        events=events,
        initial_positions=x0,
        increments=tuple(mutation.record),
        lambda_spec=lam.to_spec(),
        levy_spec=levy.to_spec() if levy is not None else "",
        seed=seed,
    )


def replay_positions(traj: LookdownTrajectory) -> dict:
    """Recompute sample-time positions from the initial positions, events and increments."""
    moving = len(traj.increments) > 0
    mutation = _Mutation(None, traj.initial_positions.copy(), recorded=traj.increments)
    mutation.moving = moving
    positions, _ = _run(traj.n, traj.sample_times, iter(traj.events), mutation)
    return positions


def empirical_measure(traj: LookdownTrajectory, t: float) -> EmpiricalMeasure:
    """Z_t^(n) = n^-1 sum_i delta_{X_i(t)}."""
    return EmpiricalMeasure.uniform(traj.positions_at(t))


# -- ancestry ---------------------------------------------------------------
@dataclass(frozen=True)
class AncestralPartition:
    t: float
    s: float
    ancestor_level: tuple[int, ...]  # 1-based, indexed by level - 1
    blocks: Partition

    def labels_match_levels(self) -> bool:
        """Every member of the i-th block has its ancestor at level i."""
        return all(
            self.ancestor_level[j - 1] == i for i, block in enumerate(self.blocks.blocks, start=1) for j in block
        )


def ancestor_levels(n: int, events: Sequence[LookdownEvent], t: float, s: float) -> np.ndarray:
    """1-based levels at time t - s of the ancestors of levels 1..n at time t."""
    anc = np.arange(n)
    lo = t - s
    for ev in reversed(events):
        if ev.time > t:
            continue
        if ev.time <= lo:
            break
        anc = source_levels(n, ev.levels)[anc]
    return anc + 1


def ancestral_partition(traj: LookdownTrajectory, t: float, s: float, *, check: bool = True) -> AncestralPartition:
    if not 0.0 <= s <= t:
        raise DomainError("lookback s must lie in [0, t]")
    if t > traj.horizon:
        raise DomainError(f"event log only covers [0, {traj.horizon}]")
    anc = ancestor_levels(traj.n, traj.events, t, s)
    part = Partition.from_labels(anc.tolist())
    out = AncestralPartition(t, s, tuple(int(a) for a in anc), part)
    if check and not out.labels_match_levels():
        raise AssertionError("block labels disagree with ancestor levels")
    return out


def cluster_measure(traj: LookdownTrajectory, t: float, s: float, i: int, phi) -> float:
    """Z^(n)_{i,s}(t, phi) = n^-1 sum_{j in block i of Pi^t(s)} phi(X_j(t))."""
    part = ancestral_partition(traj, t, s).blocks
    if not 1 <= i <= len(part):
        raise DomainError(f"block index {i} out of range 1..{len(part)}")
    pos = traj.positions_at(t)
    members = np.asarray(part.blocks[i - 1]) - 1
    return math.fsum(np.asarray(phi(pos[members]), dtype=float)) / traj.n


# -- event log I/O ----------------------------------------------------------
@dataclass(frozen=True)
class EventLog:
    n: int
    events: tuple[LookdownEvent, ...]
    seed: int | None = None
    lambda_spec: str = ""
    levy_spec: str = ""
    horizon: float | None = None


def format_event_log(log: EventLog) -> str:
    buf = io.StringIO()
    buf.write(LOG_MAGIC + "\n")
    buf.write(f"# n={log.n}\n")
    buf.write(f"# seed={'' if log.seed is None else log.seed}\n")
    buf.write(f"# lambda={log.lambda_spec}\n")
    buf.write(f"# levy={log.levy_spec}\n")
    buf.write(f"# horizon={'' if log.horizon is None else repr(log.horizon)}\n")
    for ev in log.events:
        if ev.kind == "P":
            buf.write(f"{ev.time!r} P {ev.levels[0]} {ev.levels[1]}\n")
        else:
            buf.write(f"{ev.time!r} M {','.join(map(str, ev.levels))}\n")
    return buf.getvalue()


def parse_event_log(text: str) -> EventLog:
    header: dict[str, str] = {}
    events = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != LOG_MAGIC:
        raise DomainError("not an fvlab event log")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        fields = line.split()
        try:
            time = float(fields[0])
            if fields[1] == "P" and len(fields) == 4:
                events.append(LookdownEvent(time, "P", (int(fields[2]), int(fields[3]))))
            elif fields[1] == "M" and len(fields) == 3:
                events.append(LookdownEvent(time, "M", tuple(int(x) for x in fields[2].split(","))))
            else:
                raise ValueError
        except (ValueError, IndexError, DomainError):
            raise DomainError(f"malformed event on line {lineno}: {line!r}") from None
    if "n" not in header:
        raise DomainError("event log header lacks n")
    seed = header.get("seed", "")
    horizon = header.get("horizon", "")
    return EventLog(
        n=int(header["n"]),
        events=tuple(events),
        seed=int(seed) if seed else None,
        lambda_spec=header.get("lambda", ""),
        levy_spec=header.get("levy", ""),
        horizon=float(horizon) if horizon else None,
    )


def event_log_of(traj: LookdownTrajectory) -> EventLog:
    return EventLog(traj.n, traj.events, traj.seed, traj.lambda_spec, traj.levy_spec, traj.horizon)


def write_event_log(path: str | os.PathLike, log: EventLog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_event_log(log))


def read_event_log(path: str | os.PathLike) -> EventLog:
    with open(path, encoding="utf-8") as fh:
        return parse_event_log(fh.read())


# -- validation oracle ------------------------------------------------------
def _at_least_two(n: int, x: float) -> float:
    """P(Bin(n, x) >= 2) / x^2, with its small-x limit."""
    if x < 1e-6:
        return n * (n - 1) / 2.0 * (1.0 - x) ** (n - 2) + n * (n - 1) * (n - 2) / 6.0 * x * (1.0 - x) ** (n - 3)
    return float(stats.binom.sf(1, n, x)) / (x * x)


class BernoulliThinning:
    """Direct u-thinning sampler for the events among levels 1..n.

    Points u arrive with intensity u^-2 Lambda_0(du); each level takes part
    independently with probability u, and only points with >= 2 participants
    are events.  The u-law restricted to such points has density proportional
    to u^-2 P(Bin(n, u) >= 2) Lambda_0(du); its continuous part is inverted on a
    grid in w = sqrt(u), atoms are handled exactly.  Given u, the number of
    participants is Bin(n, u) conditioned on being >= 2 and the participating
    levels are a uniform subset of that size.
    """

    def __init__(self, lam: LambdaMeasure, n: int, grid: int = 20001):
        if n < 2:
            raise DomainError("thinning needs n >= 2")
        self.n = n
        self.pair_rate = lam.kingman_mass * n * (n - 1) / 2.0
        lam0 = lam.without_kingman()
        comps = []  # (weight, kind, data)
        if lam0.has_continuous_part:
            w = np.linspace(0.0, 1.0, grid)
            u = w * w
            with np.errstate(divide="ignore", invalid="ignore"):
                dens = np.array([lam0.interior_density(float(x)) for x in u[1:-1]])
                h = stats.binom.sf(1, n, u[1:-1]) / (u[1:-1] ** 2) * dens * 2.0 * w[1:-1]
            h = np.concatenate([[h[0]], h, [0.0 if not math.isfinite(h[-1]) else h[-1]]])
            cell = 0.5 * (h[1:] + h[:-1]) * np.diff(w)
            self._grid_w = w
            self._grid_cum = np.cumsum(cell)
            # exact mass of the continuous part (the grid only shapes the law)
            mass = integrate_unit_interval(lambda x: _at_least_two(n, x) * lam0.interior_density(x))
            comps.append((mass, "grid", None))
        for x, m in lam0.atoms:
            comps.append((m * _at_least_two(n, x), "atom", x))
        if lam0.top_mass:
            comps.append((lam0.top_mass, "atom", 1.0))
        self._comps = comps
        self.multi_rate = math.fsum(c[0] for c in comps)
        self.rate = self.pair_rate + self.multi_rate

    def _draw_u(self, rng: np.random.Generator) -> float:
        pick = rng.random() * self.multi_rate
        last = len(self._comps) - 1
        for idx, (weight, kind, data) in enumerate(self._comps):
            if pick < weight or idx == last:
                if kind == "atom":
                    return data
                target = rng.random() * self._grid_cum[-1]
                i = int(np.searchsorted(self._grid_cum, target, side="right"))
                i = min(i, self._grid_w.size - 2)
                w = self._grid_w[i] + rng.random() * (self._grid_w[i + 1] - self._grid_w[i])
                return w * w
            pick -= weight
        raise AssertionError("no thinning component")

    def sample(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, list[tuple[int, ...]]]:
        """``count`` (inter-event time, participating levels) pairs."""
        if self.rate <= 0.0:
            raise DomainError("zero event rate")
        gaps = rng.exponential(1.0 / self.rate, size=count)
        sets = []
        for _ in range(count):
            if rng.random() * self.rate < self.pair_rate:
                pair = sorted(rng.choice(self.n, size=2, replace=False) + 1)
                sets.append(tuple(int(x) for x in pair))
                continue
            u = self._draw_u(rng)
            # K ~ Bin(n, u) conditioned on K >= 2, then a uniform K-subset
            ks = np.arange(2, self.n + 1)
            logp = stats.binom.logpmf(ks, self.n, u)
            p = np.exp(logp - logp.max())
            k = int(ks[min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right")), ks.size - 1)])
            chosen = np.sort(rng.choice(self.n, size=k, replace=False)) + 1
            sets.append(tuple(int(x) for x in chosen))
        return gaps, sets
