"""Lévy mutation processes: specification, sampling, characteristic exponent.

A spec is a triplet (a, Q, nu) with nu a sum of compound Poisson parts and
symmetric alpha-stable parts.  Conventions used throughout:

  E exp(i<W_t, xi>) = exp(-t Psi(xi)),
  Psi(xi) = -i<a, xi> + <xi, Q xi>/2 + int (1 - e^{i<x,xi>} + i<x,xi> 1{|x|<1}) nu(dx),

so that a drift a moves W by +a t.  Jumps of size < 1 are compensated in
the sampler to stay consistent with the triplet.

Spec strings: ``brownian:sigma=<s>[,d=<d>]``, ``drift:<a1>,...``,
``cpois:rate=<lam>,jump=point:<x1>[;<x2>...]`` (vector coordinates joined by
``/``), ``cov:<q11>/<q12>;<q21>/<q22>``, ``stable:alpha=<a>,scale=<c>[,d=<d>][,trunc=<delta>,method=truncated]``; terms joined
with ``+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .empirical import EmpiricalMeasure
from .errors import DomainError, SpecParseError

STABLE_TRUNC = 1e-3


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


@dataclass(frozen=True)
class CompoundPoisson:
    """Jump measure nu = rate * (law of one jump).

    Either a finite list of points with probabilities (exact support known),
    or a ``sampler(rng, size) -> (size, d) array`` for the normalised law.
    """

    rate: float
    points: tuple[tuple[float, ...], ...] = ()
    probs: tuple[float, ...] = ()
    sampler: Callable | None = field(default=None, compare=True)

    def __post_init__(self):
        if not self.rate > 0.0:
            raise DomainError("compound Poisson rate must be positive")
        if self.sampler is None:
            if not self.points:
                raise DomainError("compound Poisson needs jump points or a sampler")
            pts = tuple(tuple(float(c) for c in np.atleast_1d(p)) for p in self.points)
            probs = self.probs or tuple(1.0 / len(pts) for _ in pts)
            if len(probs) != len(pts) or any(p <= 0 for p in probs):
                raise DomainError("jump probabilities must be positive, one per point")
            s = math.fsum(probs)
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "probs", tuple(p / s for p in probs))

    @property
    def is_point_mass(self) -> bool:
        return self.sampler is None

    def atoms(self) -> list[tuple[float, np.ndarray]]:
        """(mass, point) pairs of nu."""
        if not self.is_point_mass:
            raise DomainError("jump law is not a finite point-mass list")
        return [(self.rate * p, np.asarray(x)) for p, x in zip(self.probs, self.points)]

    def draw(self, rng: np.random.Generator, size: int, d: int) -> np.ndarray:
        if self.sampler is not None:
            return np.asarray(self.sampler(rng, size), dtype=float).reshape(size, d)
        idx = rng.choice(len(self.points), size=size, p=np.asarray(self.probs))
        return np.asarray(self.points)[idx]

    def small_jump_mean(self) -> np.ndarray | None:
        """int x 1{|x|<1} nu(dx) for point masses (None for samplers: assumed 0)."""
        if not self.is_point_mass:
            return None
        pts = np.asarray(self.points)
        inside = np.linalg.norm(pts, axis=1) < 1.0
        return self.rate * (np.asarray(self.probs)[inside, None] * pts[inside]).sum(axis=0)

    def reversed(self) -> "CompoundPoisson":
        if self.sampler is None:
            return CompoundPoisson(self.rate, tuple(tuple(-c for c in p) for p in self.points), self.probs)
        if isinstance(self.sampler, _Negated):
            return CompoundPoisson(self.rate, sampler=self.sampler.inner)
        return CompoundPoisson(self.rate, sampler=_Negated(self.sampler))


@dataclass(frozen=True)
class _Negated:
    inner: Callable

    def __call__(self, rng, size):
        return -np.asarray(self.inner(rng, size), dtype=float)


@dataclass(frozen=True)
class Stable:
    """Symmetric alpha-stable jumps with Lévy density scale * |x|^(-d-alpha).

    ``method="exact"`` draws increments from the stable law directly (a
    Gaussian scale mixture); ``method="truncated"`` simulates jumps above
    ``trunc`` and replaces the rest by a Gaussian with the same covariance.
    """

    alpha: float
    scale: float = 1.0
    trunc: float = STABLE_TRUNC
    method: str = "exact"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise DomainError("stable index must lie in (0, 2)")
        if not self.scale > 0.0 or not self.trunc > 0.0:
            raise DomainError("stable scale and truncation must be positive")
        if self.method not in ("exact", "truncated"):
            raise DomainError(f"unknown stable sampling method {self.method!r}")

    def big_jump_rate(self, d: int) -> float:
        return self.scale * _sphere_area(d) * self.trunc ** (-self.alpha) / self.alpha

    def small_jump_variance(self, d: int) -> float:
        """Per-coordinate variance rate of the truncated jumps."""
        return self.scale * _sphere_area(d) * self.trunc ** (2.0 - self.alpha) / ((2.0 - self.alpha) * d)

    def exponent_constant(self, d: int) -> float:
        """C with Psi(xi) = C |xi|^alpha."""
        a = self.alpha
        k = math.pi / 2.0 if a == 1.0 else math.gamma(1.0 - a) * math.cos(math.pi * a / 2.0) / a
        sphere_moment = 2.0 * math.pi ** ((d - 1) / 2.0) * math.gamma((a + 1.0) / 2.0) / math.gamma((d + a) / 2.0)
        return self.scale * k * sphere_moment

    def exponent(self, xi: np.ndarray) -> float:
        r = float(np.linalg.norm(xi))
        return 0.0 if r == 0.0 else self.exponent_constant(xi.size) * r ** self.alpha

    def sample_exact(self, dts: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
        """sqrt(2A) * gamma * Z with A positive (alpha/2)-stable, E exp(-sA) = exp(-s^(alpha/2))."""
        beta = self.alpha / 2.0
        u = rng.uniform(0.0, math.pi, dts.size)
        e = rng.standard_exponential(dts.size)
        # Kanter's representation
        a = np.sin(beta * u) / np.sin(u) ** (1.0 / beta) * (np.sin((1.0 - beta) * u) / e) ** ((1.0 - beta) / beta)
        gamma = (dts * self.exponent_constant(d)) ** (1.0 / self.alpha)
        z = rng.standard_normal((dts.size, d))
        return z * (np.sqrt(2.0 * a) * gamma)[:, None]

    def reversed(self) -> "Stable":
        return self


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class LevySpec:
    dim: int = 1
    drift: tuple[float, ...] = ()
    cov: tuple[tuple[float, ...], ...] = ()
    jumps: tuple = ()

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise DomainError("dimension must be positive")
        drift = tuple(float(x) for x in self.drift) or (0.0,) * d
        cov = np.zeros((d, d)) if not self.cov else np.asarray(self.cov, dtype=float)
        if len(drift) != d or cov.shape != (d, d):
            raise DomainError("drift / covariance do not match the dimension")
        if not np.allclose(cov, cov.T):
            raise DomainError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
            raise DomainError("covariance must be positive semidefinite")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "cov", tuple(map(tuple, cov.tolist())))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        for part in self.jumps:
            if isinstance(part, CompoundPoisson) and part.is_point_mass:
                if any(len(p) != d for p in part.points):
                    raise DomainError("jump points do not match the dimension")

    # -- constructors -------------------------------------------------------
    @classmethod
    def brownian(cls, sigma: float = 1.0, d: int = 1) -> "LevySpec":
        return cls(d, cov=tuple(map(tuple, (sigma * sigma * np.eye(d)).tolist())))

    @classmethod
    def pure_drift(cls, *a: float) -> "LevySpec":
        return cls(len(a), drift=a)

    @classmethod
    def compound_poisson(cls, rate: float, points, probs=()) -> "LevySpec":
        part = CompoundPoisson(rate, tuple(tuple(np.atleast_1d(p)) for p in points), tuple(probs))
        return cls(len(part.points[0]), jumps=(part,))

    @classmethod
    def stable(
        cls, alpha: float, scale: float = 1.0, d: int = 1, trunc: float = STABLE_TRUNC, method: str = "exact"
    ) -> "LevySpec":
        return cls(d, jumps=(Stable(alpha, scale, trunc, method),))

    @classmethod
    def zero(cls, d: int = 1) -> "LevySpec":
        return cls(d)

    def __add__(self, other: "LevySpec") -> "LevySpec":
        if self.dim != other.dim:
            raise DomainError("cannot add Lévy specs of different dimensions")
        drift = tuple(x + y for x, y in zip(self.drift, other.drift))
        cov = (np.asarray(self.cov) + np.asarray(other.cov)).tolist()
        return LevySpec(self.dim, drift, tuple(map(tuple, cov)), self.jumps + other.jumps)

    # -- properties ---------------------------------------------------------
    @property
    def drift_vec(self) -> np.ndarray:
        return np.asarray(self.drift)

    @property
    def cov_matrix(self) -> np.ndarray:
        return np.asarray(self.cov)

    @property
    def chol(self) -> np.ndarray:
        """A factor L with L L^T = Q (eigen-based, so rank-deficient Q is fine)."""
        w, v = np.linalg.eigh(self.cov_matrix)
        return v * np.sqrt(np.clip(w, 0.0, None))

    @property
    def is_trivial(self) -> bool:
        return not self.jumps and not any(self.drift) and not np.any(self.cov_matrix)

    @property
    def point_mass_jumps(self) -> bool:
        return all(isinstance(p, CompoundPoisson) and p.is_point_mass for p in self.jumps)

    def jump_atoms(self) -> list[tuple[float, np.ndarray]]:
        """nu as (mass, point) pairs; requires point-mass jump parts only."""
        if not self.point_mass_jumps:
            raise DomainError("jump measure is not a finite point-mass list")
        return [a for p in self.jumps for a in p.atoms()]

    def effective_drift(self) -> np.ndarray:
        """Drift actually added per unit time, after compensating small jumps."""
        out = self.drift_vec.copy()
        for p in self.jumps:
            if isinstance(p, CompoundPoisson):
                m = p.small_jump_mean()
                if m is not None:
                    out -= m
        return out

    def reversed(self) -> "LevySpec":
        """The dual process W*: drift -a, nu reflected through 0, Q unchanged."""
        return LevySpec(self.dim, tuple(-x for x in self.drift), self.cov, tuple(p.reversed() for p in self.jumps))

    def to_spec(self) -> str:
        terms = []
        cov = self.cov_matrix
        if np.any(cov):
            s2 = cov[0, 0]
            if np.allclose(cov, s2 * np.eye(self.dim)):
                terms.append(f"brownian:sigma={math.sqrt(s2)!r},d={self.dim}")
            else:
                terms.append("cov:" + ";".join("/".join(repr(x) for x in row) for row in cov.tolist()))
        if any(self.drift):
            terms.append("drift:" + ",".join(repr(x) for x in self.drift))
        for p in self.jumps:
            if isinstance(p, Stable):
                extra = f",trunc={p.trunc!r},method=truncated" if p.method == "truncated" else ""
                terms.append(f"stable:alpha={p.alpha!r},scale={p.scale!r},d={self.dim}{extra}")
            elif p.is_point_mass:
                pts = ";".join("/".join(repr(c) for c in x) for x in p.points)
                probs = "" if len(set(p.probs)) == 1 else ",probs=" + ";".join(repr(q) for q in p.probs)
                terms.append(f"cpois:rate={p.rate!r},jump=point:{pts}{probs}")
            else:
                terms.append(f"cpois:rate={p.rate!r},jump=sampler")
        return "+".join(terms) if terms else f"zero:d={self.dim}"

    def __str__(self) -> str:
        return self.to_spec()


# -- parsing ----------------------------------------------------------------
def _kv(body: str, term: str) -> dict[str, str]:
    out = {}
    for item in body.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise SpecParseError(f"expected key=value in {term!r}, got {item!r}")
        out[key.strip().lower()] = value.strip()
    return out


def _num(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SpecParseError(f"bad {what}: {text!r}") from None


def _vec(text: str) -> tuple[float, ...]:
    return tuple(_num(c, "coordinate") for c in text.split("/"))


def parse_levy(spec: str) -> LevySpec:
    """Parse a Lévy specification string (see module docstring)."""
    spec = spec.strip()
    if not spec:
        raise SpecParseError("empty Lévy specification")
    parts: list[tuple[str, dict | tuple]] = []
    dims: set[int] = set()
    for term in spec.split("+"):
        term = term.strip()
        name, _, body = term.partition(":")
        name = name.lower()
        if name == "zero":
            kv = _kv(body, term) if body else {}
            dims.add(int(_num(kv.get("d", "1"), "dimension")))
            continue
        if name == "drift":
            a = tuple(_num(x, "drift") for x in body.split(","))
            dims.add(len(a))
            parts.append((name, a))
        elif name == "cov":
            rows = tuple(_vec(r) for r in body.split(";"))
            dims.add(len(rows))
            parts.append((name, rows))
        elif name in ("brownian", "stable", "cpois"):
            kv = _kv(body, term)
            if "d" in kv:
                dims.add(int(_num(kv["d"], "dimension")))
            if name == "cpois":
                jump = kv.get("jump", "")
                kind, _, pts = jump.partition(":")
                if kind != "point" or not pts:
                    raise SpecParseError(f"cpois needs jump=point:<x1>[;...], got {jump!r}")
                kv["_points"] = tuple(_vec(p) for p in pts.split(";"))
                dims.update({len(p) for p in kv["_points"]})
            parts.append((name, kv))
        else:
            raise SpecParseError(f"unknown Lévy term {term!r}")
    if len(dims) > 1:
        raise SpecParseError(f"inconsistent dimensions {sorted(dims)} in {spec!r}")
    d = dims.pop() if dims else 1
    total = LevySpec.zero(d)
    try:
        for name, data in parts:
            if name == "drift":
                total = total + LevySpec.pure_drift(*data)
            elif name == "cov":
                total = total + LevySpec(d, cov=data)
            elif name == "brownian":
                allowed = {"sigma", "d"}
                _check_keys(data, allowed, name)
                total = total + LevySpec.brownian(_num(data.get("sigma", "1"), "sigma"), d)
            elif name == "stable":
                _check_keys(data, {"alpha", "scale", "d", "trunc", "method"}, name)
                if "alpha" not in data:
                    raise SpecParseError("stable term needs alpha=")
                total = total + LevySpec.stable(
                    _num(data["alpha"], "alpha"),
                    _num(data.get("scale", "1"), "scale"),
                    d,
                    _num(data.get("trunc", repr(STABLE_TRUNC)), "trunc"),
                    data.get("method", "exact"),
                )
            else:
                _check_keys(data, {"rate", "jump", "d", "probs", "_points"}, name)
                if "rate" not in data:
                    raise SpecParseError("cpois term needs rate=")
                probs = tuple(_num(q, "probability") for q in data["probs"].split(";")) if "probs" in data else ()
                total = total + LevySpec.compound_poisson(_num(data["rate"], "rate"), data["_points"], probs)
    except DomainError as exc:
        raise SpecParseError(str(exc)) from exc
    return total


def _check_keys(data: dict, allowed: set[str], name: str) -> None:
    extra = set(data) - allowed
    if extra:
        raise SpecParseError(f"unknown keys {sorted(extra)} in {name} term")


# -- sampling ---------------------------------------------------------------
def sample_increments(spec: LevySpec, dt, rng: np.random.Generator, m: int | None = None) -> np.ndarray:
    """Independent increments W_{dt_j}, returned as an (m, d) array.

    ``dt`` is a scalar (with ``m`` copies) or an array of durations.
    """
    dts = np.asarray(dt, dtype=float)
    if dts.ndim == 0:
        dts = np.full(1 if m is None else int(m), float(dts))
    if np.any(dts < 0) or not np.all(np.isfinite(dts)):
        raise DomainError("durations must be finite and nonnegative")
    count, d = dts.size, spec.dim
    out = np.outer(dts, spec.effective_drift())
    cov = spec.cov_matrix
    if np.any(cov):
        g = rng.standard_normal((count, d))
        out += (g @ spec.chol.T) * np.sqrt(dts)[:, None]
    for part in spec.jumps:
        if isinstance(part, CompoundPoisson):
            counts = rng.poisson(part.rate * dts)
            _add_jumps(out, counts, part.draw(rng, int(counts.sum()), d))
        elif part.method == "exact":
            out += part.sample_exact(dts, d, rng)
        else:
            var = part.small_jump_variance(d)
            out += rng.standard_normal((count, d)) * np.sqrt(var * dts)[:, None]
            counts = rng.poisson(part.big_jump_rate(d) * dts)
            total = int(counts.sum())
            if total:
                radius = part.trunc * rng.random(total) ** (-1.0 / part.alpha)
                direction = rng.standard_normal((total, d))
                direction /= np.linalg.norm(direction, axis=1, keepdims=True)
                _add_jumps(out, counts, direction * radius[:, None])
    return out


def _add_jumps(out: np.ndarray, counts: np.ndarray, jumps: np.ndarray) -> None:
    if jumps.shape[0]:
        rows = np.repeat(np.arange(out.shape[0]), counts)
        np.add.at(out, rows, jumps)


def sample_increment(spec: LevySpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    if not dt > 0:
        raise DomainError("dt must be positive")
    return sample_increments(spec, dt, rng, 1)[0]


def char_exponent(spec: LevySpec, xi) -> complex:
    """Psi(xi), with E exp(i<W_t, xi>) = exp(-t Psi(xi))."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != spec.dim:
        raise DomainError("xi has the wrong dimension")
    value = -1j * float(spec.drift_vec @ xi) + 0.5 * float(xi @ spec.cov_matrix @ xi)
    for part in spec.jumps:
        if isinstance(part, Stable):
            value += part.exponent(xi)
        elif part.is_point_mass:
            for mass, x in part.atoms():
                dot = float(x @ xi)
                comp = 1j * dot if np.linalg.norm(x) < 1.0 else 0.0
                value += mass * (1.0 - np.exp(1j * dot) + comp)
        else:
            raise DomainError("characteristic exponent needs point-mass or stable jumps")
    return complex(value)


def _need_replicas(replicas: int) -> None:
    if replicas < 100:
        raise DomainError("at least 100 replicas are needed for a meaningful estimate")


def small_ball_prob(spec: LevySpec, t: float, eps: float, replicas: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo p(t, eps) = P(|W_t| < eps) from W_0 = 0."""
    if not (t > 0 and eps > 0):
        raise DomainError("t and eps must be positive")
    _need_replicas(replicas)
    if spec.is_trivial:
        return Estimate(1.0, 0.0)
    w = sample_increments(spec, t, rng, replicas)
    hits = np.linalg.norm(w, axis=1) < eps
    p = float(hits.mean())
    return Estimate(p, math.sqrt(p * (1.0 - p) / replicas))


def semigroup_apply(spec: LevySpec, t: float, phi, x, replicas: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo T_t phi(x) = E phi(x + W_t)."""
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = sample_increments(spec, t, rng, replicas) + x
    vals = np.asarray(phi(w), dtype=float)
    if replicas == 1:
        return Estimate(float(vals[0]), math.inf)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas)))


def convolve_support(nu_points, mu: EmpiricalMeasure, k: int) -> EmpiricalMeasure:
    """nu^(k) * mu for a finite point-mass nu given as (mass, point) pairs.

    Equal locations are merged; k = 0 returns mu unchanged.
    """
    if int(k) != k or k < 0:
        raise DomainError("k must be a nonnegative integer")
    nu = [(float(m), np.atleast_1d(np.asarray(y, dtype=float))) for m, y in nu_points]
    if not nu:
        raise DomainError("empty jump support")
    jm = np.array([m for m, _ in nu])
    jy = np.stack([y for _, y in nu])
    if jy.shape[1] != mu.dim:
        raise DomainError("jump points do not match the measure's dimension")
    pts, w = mu.points, mu.weights
    for _ in range(int(k)):
        pts = (pts[:, None, :] + jy[None, :, :]).reshape(-1, mu.dim)
        w = (w[:, None] * jm[None, :]).ravel()
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        acc = np.zeros(uniq.shape[0])
        np.add.at(acc, inv.ravel(), w)
        pts, w = uniq, acc
    total = mu.total_mass * math.fsum(jm) ** int(k)
    return EmpiricalMeasure(pts, w, total_mass=total)
