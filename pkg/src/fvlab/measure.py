"""The finite measure Lambda on [0, 1] that drives resampling.

A measure is a sum of
  * an atom at 0 (the Kingman part),
  * an atom at 1,
  * interior atoms,
  * scaled Beta(2 - alpha, alpha) laws (``uniform`` is the alpha = 1 case),
  * user densities on (0, 1), integrated numerically.

Specification strings: ``kingman:<mass>``, ``beta:<alpha>[:<mass>]``,
``atoms:<m1>@<x1>,<m2>@<x2>``, ``uniform:<mass>``, ``zero``; terms are
joined with ``+``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DomainError, SpecParseError
from .quadrature import integrate_unit_interval


@dataclass(frozen=True)
class BetaPart:
    """``mass`` times the Beta(2 - alpha, alpha) probability law."""

    alpha: float
    mass: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise DomainError(f"Beta family needs alpha in (0, 2), got {self.alpha}")
        if not self.mass > 0.0:
            raise DomainError(f"Beta mass must be positive, got {self.mass}")

    @property
    def a(self) -> float:
        return 2.0 - self.alpha

    @property
    def b(self) -> float:
        return self.alpha

    @property
    def log_norm(self) -> float:
        return math.lgamma(self.a) + math.lgamma(self.b) - math.lgamma(self.a + self.b)

    def density(self, x: float) -> float:
        if x <= 0.0 or x >= 1.0:
            return 0.0
        return self.mass * math.exp(
            (self.a - 1.0) * math.log(x) + (self.b - 1.0) * math.log1p(-x) - self.log_norm
        )


@dataclass(frozen=True, eq=False)
class DensityPart:
    """A density on (0, 1) with finite total mass.

    ``singular_at_zero`` declares that the density may blow up (integrably) at
    0; it only changes which quadrature path is used.
    """

    func: Callable[[float], float]
    name: str = "density"
    singular_at_zero: bool = True
    mass: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mass", integrate_unit_interval(self.func))
        if not (self.mass > 0.0 and math.isfinite(self.mass)):
            raise DomainError(f"density {self.name!r} must have finite positive mass")

    def density(self, x: float) -> float:
        return self.func(x)


@dataclass(frozen=True)
class LambdaMeasure:
    kingman_mass: float = 0.0
    top_mass: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    betas: tuple[BetaPart, ...] = ()
    densities: tuple[DensityPart, ...] = ()

    def __post_init__(self):
        if self.kingman_mass < 0.0 or self.top_mass < 0.0:
            raise DomainError("atom masses at 0 and 1 must be nonnegative")
        atoms = []
        for loc, mass in self.atoms:
            if not 0.0 < loc < 1.0:
                raise DomainError(f"interior atom location {loc} is not in (0, 1)")
            if not mass > 0.0:
                raise DomainError(f"atom mass {mass} must be positive")
            atoms.append((float(loc), float(mass)))
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "kingman_mass", float(self.kingman_mass))
        object.__setattr__(self, "top_mass", float(self.top_mass))

    # -- constructors -------------------------------------------------------
    @classmethod
    def kingman(cls, mass: float = 1.0) -> "LambdaMeasure":
        return cls(kingman_mass=mass)

    @classmethod
    def beta(cls, alpha: float, mass: float = 1.0) -> "LambdaMeasure":
        return cls(betas=(BetaPart(alpha, mass),))

    @classmethod
    def uniform(cls, mass: float = 1.0) -> "LambdaMeasure":
        return cls(betas=(BetaPart(1.0, mass),))

    @classmethod
    def atom(cls, location: float, mass: float = 1.0) -> "LambdaMeasure":
        return cls.from_atoms([(location, mass)])

    @classmethod
    def from_atoms(cls, atoms) -> "LambdaMeasure":
        king = top = 0.0
        inner = []
        for loc, mass in atoms:
            if loc == 0.0:
                king += mass
            elif loc == 1.0:
                top += mass
            else:
                inner.append((loc, mass))
        return cls(kingman_mass=king, top_mass=top, atoms=tuple(inner))

    @classmethod
    def from_density(cls, func, name="density", singular_at_zero=True) -> "LambdaMeasure":
        return cls(densities=(DensityPart(func, name, singular_at_zero),))

    def __add__(self, other: "LambdaMeasure") -> "LambdaMeasure":
        return LambdaMeasure(
            kingman_mass=self.kingman_mass + other.kingman_mass,
            top_mass=self.top_mass + other.top_mass,
            atoms=self.atoms + other.atoms,
            betas=self.betas + other.betas,
            densities=self.densities + other.densities,
        )

    # -- masses -------------------------------------------------------------
    @property
    def interior_mass(self) -> float:
        return math.fsum(
            [m for _, m in self.atoms] + [p.mass for p in self.betas] + [d.mass for d in self.densities]
        )

    @property
    def total_mass(self) -> float:
        """sigma = Lambda([0, 1]); also the pair-coalescence rate."""
        return math.fsum([self.kingman_mass, self.top_mass, self.interior_mass])

    @property
    def is_zero(self) -> bool:
        return self.total_mass == 0.0

    @property
    def has_continuous_part(self) -> bool:
        return bool(self.betas or self.densities)

    def without_kingman(self) -> "LambdaMeasure":
        return LambdaMeasure(0.0, self.top_mass, self.atoms, self.betas, self.densities)

    def interior_density(self, x: float) -> float:
        """Density of the absolutely continuous part at x."""
        return math.fsum([p.density(x) for p in self.betas] + [d.density(x) for d in self.densities])

    def to_spec(self) -> str:
        terms = []
        if self.kingman_mass:
            terms.append(f"kingman:{self.kingman_mass!r}")
        for part in self.betas:
            if part.alpha == 1.0:
                terms.append(f"uniform:{part.mass!r}")
            else:
                terms.append(f"beta:{part.alpha!r}:{part.mass!r}")
        atoms = [(m, x) for x, m in self.atoms]
        if self.top_mass:
            atoms.append((self.top_mass, 1.0))
        if atoms:
            terms.append("atoms:" + ",".join(f"{m!r}@{x!r}" for m, x in atoms))
        for d in self.densities:
            terms.append(f"density:{d.name}")
        return "+".join(terms) if terms else "zero"

    def __str__(self) -> str:
        return self.to_spec()


def _float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SpecParseError(f"bad {what}: {text!r}") from None


def parse_lambda(spec: str) -> LambdaMeasure:
    """Parse a Lambda specification string."""
    spec = spec.strip()
    if not spec:
        raise SpecParseError("empty Lambda specification")
    total = LambdaMeasure()
    for term in spec.split("+"):
        term = term.strip()
        name, _, rest = term.partition(":")
        name = name.lower()
        try:
            if name in ("zero", "0") and not rest:
                part = LambdaMeasure()
            elif name == "kingman":
                part = LambdaMeasure.kingman(_float(rest or "1", "kingman mass"))
            elif name == "uniform":
                part = LambdaMeasure.uniform(_float(rest or "1", "uniform mass"))
            elif name == "beta":
                fields = rest.split(":")
                if not 1 <= len(fields) <= 2:
                    raise SpecParseError(f"beta term needs alpha[:mass], got {term!r}")
                alpha = _float(fields[0], "beta alpha")
                mass = _float(fields[1], "beta mass") if len(fields) == 2 else 1.0
                part = LambdaMeasure.beta(alpha, mass)
            elif name == "atoms":
                atoms = []
                for item in rest.split(","):
                    m, sep, x = item.partition("@")
                    if not sep:
                        raise SpecParseError(f"atom {item!r} is not <mass>@<location>")
                    loc = _float(x, "atom location")
                    if not 0.0 <= loc <= 1.0:
                        raise SpecParseError(f"atom location {loc} outside [0, 1]")
                    atoms.append((loc, _float(m, "atom mass")))
                part = LambdaMeasure.from_atoms(atoms)
            else:
                raise SpecParseError(f"unknown Lambda term {term!r}")
        except DomainError as exc:
            raise SpecParseError(str(exc)) from exc
        total = total + part
    return total
