"""The Laplace exponent psi_Lambda, coming down from infinity, v(t) and dust.

psi(u) = Lambda({0}) u^2 + int_(0,1] (exp(-u x) - 1 + u x) x^-2 Lambda(dx)
"""
from __future__ import annotations

import enum
import math

import numpy as np
from scipy import optimize, special

from .errors import DomainError, UndeterminedError
from .measure import BetaPart, LambdaMeasure
from .quadrature import composite_gauss, gauss_jacobi, gauss_legendre, integrate_interval

SERIES_CUTOFF = 1e-4


class Classification(enum.Enum):
    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"

    def __bool__(self):
        if self is Classification.UNDETERMINED:
            raise UndeterminedError("classification is undetermined")
        return self is Classification.YES


def excess_exp(y):
    """exp(-y) - 1 + y, accurate for small y (vectorised)."""
    y = np.asarray(y, dtype=float)
    small = y < SERIES_CUTOFF
    out = np.empty_like(y)
    ys = y[small]
    out[small] = ys * ys * (0.5 - ys * (1.0 / 6.0 - ys * (1.0 / 24.0 - ys / 120.0)))
    yl = y[~small]
    out[~small] = np.expm1(-yl) + yl
    return out


def _psi_beta(u: np.ndarray, part: BetaPart) -> np.ndarray:
    """Beta(2-alpha, alpha) contribution for an array of u > 0, split into three pieces:

    x in [1/2, 1): Gauss-Jacobi for the (1-x)^(alpha-1) endpoint factor;
    x in [x_c, 1/2]: composite Gauss-Legendre in y = -log x, unit-ish panels;
    x in (0, x_c]: Taylor series in u x integrated via incomplete beta functions,
    where x_c = min(1/2, 1e-3 / u).
    """
    alpha = part.alpha
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0.0
    if not pos.any():
        return out
    u = u[pos]
    # (1/2, 1)
    yj, wj = gauss_jacobi(48, alpha - 1.0, 0.0)
    x = 0.75 + 0.25 * yj
    total = 0.25 ** alpha * (excess_exp(u[:, None] * x[None, :]) * x ** (-1.0 - alpha)) @ wj
    # series region: u^j int_0^x_c x^(j-alpha-1) (1-x)^(alpha-1) dx, kept in log form
    x_c = np.minimum(0.5, 1e-3 / u)
    log_u, log_xc = np.log(u), np.log(x_c)
    coeffs = (0.5, -1.0 / 6.0, 1.0 / 24.0, -1.0 / 120.0, 1.0 / 720.0)
    for j, c in enumerate(coeffs, start=2):
        a = j - alpha
        total = total + c * np.exp(j * log_u + a * log_xc) * special.hyp2f1(a, 1.0 - alpha, a + 1.0, x_c) / a
    # middle region in y = -log x; u values sharing a panel count are done together
    y_lo = math.log(2.0)
    y_hi = -log_xc
    panels = np.maximum(1, np.ceil(y_hi - y_lo)).astype(int)
    nodes, weights = gauss_legendre(16)
    for m in np.unique(panels[x_c < 0.5]):
        sel = (panels == m) & (x_c < 0.5)
        frac = np.linspace(0.0, 1.0, m + 1)
        edges = y_lo + (y_hi[sel, None] - y_lo) * frac[None, :]
        width = np.diff(edges, axis=1)
        y = edges[:, :-1, None] + width[:, :, None] * nodes[None, None, :]
        xx = np.exp(-y)
        vals = excess_exp(u[sel, None, None] * xx) * np.exp(alpha * y) * (-np.expm1(-y)) ** (alpha - 1.0)
        total[sel] += np.sum(vals * weights * width[:, :, None], axis=(1, 2))
    out[pos] = part.mass * total / math.exp(part.log_norm)
    return out


def _psi_density(u: float, func) -> float:
    if u == 0.0:
        return 0.0

    def f(x):
        return float(excess_exp(u * x)) / (x * x) * func(x)

    split = min(0.5, 1.0 / u)
    return integrate_interval(f, 0.0, split, epsabs=1e-13, epsrel=1e-11) + integrate_interval(
        f, split, 1.0, epsabs=1e-13, epsrel=1e-11
    )


def psi(lam: LambdaMeasure, u):
    """psi_Lambda(u) for scalar or array u >= 0."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise DomainError("psi needs u >= 0")
    flat = arr.ravel()
    out = np.zeros_like(flat)
    if lam.kingman_mass:
        out += lam.kingman_mass * flat * flat
    if lam.top_mass:
        out += lam.top_mass * excess_exp(flat)
    for x, m in lam.atoms:
        out += m * excess_exp(flat * x) / (x * x)
    for part in lam.betas:
        out += _psi_beta(flat, part)
    for dens in lam.densities:
        out += np.array([_psi_density(v, dens.func) for v in flat])
    if np.ndim(u) == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def c_lambda(lam: LambdaMeasure) -> float:
    """Constant in v(t) >= c / t, from psi(u) <= (Lambda{0} + Lambda(0,1]/2) u^2."""
    bound = lam.kingman_mass + 0.5 * (lam.total_mass - lam.kingman_mass)
    return math.inf if bound == 0.0 else 1.0 / bound


def _log_segment(fn, lo: float, hi: float, order: int = 10) -> float:
    """int_lo^hi fn(u) du using Gauss-Legendre in log u."""
    nodes, weights = gauss_legendre(order)
    a, b = math.log(lo), math.log(hi)
    s = a + (b - a) * nodes
    u = np.exp(s)
    return float(np.dot(weights, fn(u) * u)) * (b - a)


def _classify_dyadic(segment, *, max_segments: int = 1000, tol: float = 1e-10, window: int = 8):
    """Decide convergence of sum_j I_j from dyadic segment integrals I_j >= 0.

    Converges once the geometric tail bound I_J r / (1 - r), r the worst recent
    ratio, is below tol * partial sum.  Diverges when segments stop shrinking,
    or when at the end the decay exponent is at most the 1/j rate of a
    logarithmically divergent series.  Otherwise undetermined.
    """
    seg = []
    partial = 0.0
    for j in range(max_segments):
        value = segment(j)
        if not math.isfinite(value):
            return Classification.NO, partial
        seg.append(value)
        partial += value
        if j < window:
            continue
        recent = seg[-window - 1 :]
        if recent[-1] == 0.0 and partial > 0.0:
            return Classification.YES, partial
        if min(recent) <= 0.0:
            continue
        ratios = [recent[i + 1] / recent[i] for i in range(window)]
        r = max(ratios)
        if r < 1.0 and recent[-1] * r / (1.0 - r) <= tol * partial:
            return Classification.YES, partial
        if min(ratios) >= 1.0:
            return Classification.NO, partial
    ratios = [seg[-i] / seg[-i - 1] for i in range(1, window + 1) if seg[-i - 1] > 0]
    if ratios:
        exponent = -math.log2(float(np.median(ratios)))
        if exponent <= 2.0 / max_segments:
            return Classification.NO, partial
    return Classification.UNDETERMINED, partial


def comes_down_from_infinity(lam: LambdaMeasure, *, max_segments: int = 1000) -> Classification:
    """Numerical test of int_1^inf psi(u)^-1 du < infinity (requires Lambda({1}) = 0)."""
    if lam.top_mass > 0.0:
        raise DomainError("coming down from infinity is classified only for Lambda({1}) = 0")
    if lam.is_zero:
        return Classification.NO
    if lam.kingman_mass > 0.0:
        return Classification.YES

    def segment(j):
        return _log_segment(lambda u: 1.0 / psi(lam, u), 2.0 ** j, 2.0 ** (j + 1))

    verdict, _ = _classify_dyadic(segment, max_segments=max_segments)
    return verdict


def has_dust(lam: LambdaMeasure, *, max_segments: int = 1000) -> Classification:
    """Lambda({0}) = 0 and int_(0,1) x^-1 Lambda(dx) < infinity."""
    if lam.kingman_mass > 0.0:
        return Classification.NO
    if not lam.has_continuous_part:
        return Classification.YES

    def weighted(x):
        # x^-1 times the continuous density, times x for d(log x)
        return np.array([lam.interior_density(float(v)) for v in x])

    def segment(j):
        lo, hi = 2.0 ** (-j - 1), 2.0 ** (-j)
        s = _log_segment(lambda x: weighted(x) / x, lo, hi)
        s += math.fsum(m / x for x, m in lam.atoms if lo <= x < hi)
        return s

    verdict, _ = _classify_dyadic(segment, max_segments=max_segments)
    return verdict


def _dyadic_segments(lam: LambdaMeasure, base: float, rtol: float) -> tuple[list[float], float]:
    """Integrals of psi^-1 over [base 2^j, base 2^(j+1)] until the tail is negligible.

    Returns the segments and a geometric estimate of what lies beyond them
    (exact for power-law psi, e.g. Kingman).
    """
    parts: list[float] = []
    for j in range(4000):
        lo = base * 2.0 ** j
        seg = _log_segment(lambda u: 1.0 / psi(lam, u), lo, 2.0 * lo)
        parts.append(seg)
        if j >= 4 and parts[-2] > 0.0:
            r = seg / parts[-2]
            if r < 1.0:
                rest = seg * r / (1.0 - r)
                if rest <= rtol * math.fsum(parts):
                    return parts, rest
        if not math.isfinite(lo * 4.0):
            break
    return parts, 0.0


def tail_integral(lam: LambdaMeasure, v: float, *, rtol: float = 1e-11) -> float:
    """int_v^inf psi(u)^-1 du, summed over segments [v 2^j, v 2^(j+1)]."""
    if not v > 0.0:
        raise DomainError("tail integral needs v > 0")
    parts, rest = _dyadic_segments(lam, v, rtol)
    return math.fsum(parts + [rest])


def v_of_t(lam: LambdaMeasure, t: float, cdi: Classification | None = None) -> float:
    """Solve int_v^inf psi^-1 = t for v; infinity when Lambda stays infinite.

    The tail is tabulated once on a dyadic grid from c_Lambda / t (a lower
    bound for v); the root search then only integrates inside one cell.
    """
    if not t > 0.0:
        raise DomainError("v(t) needs t > 0")
    if cdi is None:
        cdi = comes_down_from_infinity(lam)
    if cdi is Classification.UNDETERMINED:
        raise UndeterminedError("coming down from infinity is undetermined; classify Lambda explicitly")
    if cdi is Classification.NO:
        return math.inf
    base = c_lambda(lam) / t
    parts, rest = _dyadic_segments(lam, base, 1e-11)
    while math.fsum(parts) + rest < t:
        base *= 0.5
        parts.insert(0, _log_segment(lambda u: 1.0 / psi(lam, u), base, 2.0 * base))
    suffix = [math.fsum(parts[i:]) + rest for i in range(len(parts))] + [rest]
    i = max(j for j in range(len(parts)) if suffix[j] >= t)
    lo, hi = base * 2.0 ** i, base * 2.0 ** (i + 1)

    def f(logv):
        return _log_segment(lambda u: 1.0 / psi(lam, u), math.exp(logv), hi) + suffix[i + 1] - t

    if f(math.log(lo)) == 0.0:
        return lo
    root = optimize.brentq(f, math.log(lo), math.log(hi), xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return math.exp(root)


def v_residual(lam: LambdaMeasure, t: float, v: float) -> float:
    return abs(tail_integral(lam, v) - t)
