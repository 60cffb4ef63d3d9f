"""Finite atomic measures on R^d and ball / enlargement queries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError


class EmpiricalMeasure:
    """Weighted point masses in R^d.

    Uniform measures built with :meth:`uniform` carry total mass exactly 1,
    independent of rounding in the individual 1/n weights.
    """

    def __init__(self, points, weights, *, total_mass: float | None = None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise DomainError("points and weights differ in length")
        if np.any(w <= 0):
            raise DomainError("atom weights must be positive")
        self.points = pts
        self.weights = w
        self._uniform = False
        self.total_mass = math.fsum(w) if total_mass is None else float(total_mass)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        m = cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), total_mass=1.0)
        m._uniform = True
        return m

    @classmethod
    def point(cls, x) -> "EmpiricalMeasure":
        return cls.uniform(np.atleast_2d(np.asarray(x, dtype=float)))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def integrate(self, phi) -> float:
        """<phi, mu>."""
        values = np.asarray(phi(self.points), dtype=float)
        if self._uniform:
            return float(values.mean()) * self.total_mass
        return math.fsum(values * self.weights)

    def mass(self, indicator) -> float:
        return self.integrate(indicator)

    def normalized(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points, self.weights / self.total_mass, total_mass=1.0)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """m i.i.d. draws from the normalised measure."""
        if self._uniform:
            idx = rng.integers(0, len(self), size=m)
        else:
            idx = rng.choice(len(self), size=m, p=self.weights / self.weights.sum())
        return self.points[idx].copy()

    def merged(self, decimals: int | None = None) -> "EmpiricalMeasure":
        """Combine atoms at identical locations (optionally after rounding)."""
        pts = self.points if decimals is None else np.round(self.points, decimals)
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        w = np.zeros(uniq.shape[0])
        np.add.at(w, inv.ravel(), self.weights)
        return EmpiricalMeasure(uniq, w, total_mass=self.total_mass)

    def hits(self, queries, eps: float) -> np.ndarray:
        """For each query y, whether this measure charges the open ball B(y, eps)."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.dim and self.dim == 1:
            q = q.reshape(-1, 1)
        tree = cKDTree(self.points)
        dist, _ = tree.query(q, k=1)
        return dist < eps


@dataclass(frozen=True)
class BallQuery:
    """Indicator of the open ball B(center, radius)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, dtype=float))))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if len(self.center) == 1 else x[None, :]
        d = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return (d < self.radius).astype(float)


@dataclass(frozen=True)
class Enlargement:
    """Indicator of B_eps = {x : d(x, B) < eps} for a finite point set B."""

    points: tuple[tuple[float, ...], ...]
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", tuple(map(tuple, pts)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        tree = cKDTree(np.asarray(self.points))
        dist, _ = tree.query(x, k=1)
        return (dist < self.eps).astype(float)


@dataclass(frozen=True)
class Coordinate:
    """phi(x) = x_i."""

    index: int = 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return x[:, self.index]


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x)
        return np.full(x.shape[0], float(self.value))
