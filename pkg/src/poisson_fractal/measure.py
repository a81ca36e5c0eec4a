"""Intensity-measure calculations for the fractal ball and box models.

The intensity is ``lambda * dx * nu(dr)`` on ``R^d x (0, 1]``. Every hitting or
covering probability in the models is ``exp(-lambda * m)`` for the mu-mass
``m`` of a set of grains; this module computes those masses.

Pure-power masses have closed forms. They are polynomial-times-power
integrals whose termwise expansion cancels badly when the lower limit is
close to 1, so they are evaluated with mpmath at 50 digits and rounded once.
Log-perturbed laws go through adaptive quadrature.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
from scipy import integrate as _integrate

from .grains import Model

_DPS = 50
LOG_KNEE = math.exp(-4.0)


class LawKind(str, enum.Enum):
    POWER = "power"
    LOG_PLUS = "logplus"
    LOG_MINUS = "logminus"


@dataclass(frozen=True)
class RadiusLaw:
    """Radius measure with density ``r^(-d-1)`` on ``(r_min, 1]``.

    The log-perturbed kinds multiply the density by ``1 +- 2/|log r|`` below
    ``knee``. The factor blows up at ``r = 1``, so it is only applied where it
    stays bounded; the small-radius tail, which is all the emptiness criteria
    look at, is unchanged.
    """

    kind: LawKind = LawKind.POWER
    dim: int = 1
    r_min: float = 0.0
    knee: float = LOG_KNEE

    def __post_init__(self):
        object.__setattr__(self, "kind", LawKind(self.kind))
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")
        if not 0.0 <= self.r_min < 1.0:
            raise ValueError(f"r_min must lie in [0, 1), got {self.r_min}")
        if self.kind is not LawKind.POWER:
            if not 0.0 < self.knee < 1.0:
                raise ValueError(f"log-perturbed law is not integrable near r=1 with knee={self.knee}")
            if self.kind is LawKind.LOG_MINUS and self.knee >= math.exp(-2.0):
                raise ValueError(f"log-minus density is negative below knee={self.knee}; need knee < e^-2")

    @property
    def sign(self) -> int:
        return {LawKind.POWER: 0, LawKind.LOG_PLUS: 1, LawKind.LOG_MINUS: -1}[self.kind]

    def density(self, r: float) -> float:
        base = r ** (-self.dim - 1)
        if self.sign and r < self.knee:
            return base * (1.0 + self.sign * 2.0 / abs(math.log(r)))
        return base


@dataclass(frozen=True)
class IntensitySpec:
    model: Model
    dim: int
    lam: float
    law: RadiusLaw = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.law is None:
            object.__setattr__(self, "law", RadiusLaw(LawKind.POWER, self.dim))
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.law.dim != self.dim:
            raise ValueError(f"law dimension {self.law.dim} != model dimension {self.dim}")


def integrate(f: Callable[[float], float], a: float, b: float, points: Sequence[float] = (),
              rtol: float = 1e-12) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` on ``[a, b]``."""
    if b <= a:
        return 0.0
    pts = sorted(p for p in points if a < p < b)
    value, _ = _integrate.quad(f, a, b, points=pts or None, epsabs=1e-14, epsrel=rtol, limit=500)
    return value


def unit_ball_volume(d: int) -> float:
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def radius_tail_mass(r_lo: float, r_hi: float, d: int) -> float:
    """nu-mass of ``[r_lo, r_hi]`` under the pure-power density."""
    if not 0.0 < r_lo <= r_hi <= 1.0:
        raise ValueError(f"need 0 < r_lo <= r_hi <= 1, got {r_lo}, {r_hi}")
    return (r_lo ** -d - r_hi ** -d) / d


def _check_eps(eps: float) -> None:
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


def _check_level(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"level must be a positive integer, got {n}")


def _shifted_power_integral(shifts: Sequence, lo, hi=1) -> float:
    """``int_lo^hi prod_i (r - shifts[i]) * r^(-m-1) dr`` with ``m = len(shifts)``.

    Arguments may be floats or mpmath numbers; the polynomial is expanded and
    integrated termwise in extended precision.
    """
    with mpmath.workdps(_DPS):
        lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
        if hi <= lo:
            return 0.0
        coeffs = [mpmath.mpf(1)]  # ascending powers of r
        for s in shifts:
            s = mpmath.mpf(s)
            nxt = [mpmath.mpf(0)] * (len(coeffs) + 1)
            for j, c in enumerate(coeffs):
                nxt[j + 1] += c
                nxt[j] -= s * c
            coeffs = nxt
        m = len(shifts)
        total = coeffs[m] * mpmath.log(hi / lo)
        for j in range(m):
            total += coeffs[j] * (lo ** (j - m) - hi ** (j - m)) / (m - j)
        return float(total)


def hit_measure_origin_ball(eps: float, d: int) -> float:
    """mu-mass of balls with radius in ``[eps, 1]`` that contain the origin."""
    _check_eps(eps)
    return unit_ball_volume(d) * math.log(1.0 / eps)


def hit_measure_unit_cube_box(eps: float, d: int) -> float:
    """mu-mass of boxes with side in ``[eps, 1]`` meeting ``[0, 1]^d``."""
    _check_eps(eps)
    return _shifted_power_integral([-1] * d, eps)


def untouched_exponent_box(n: int, d: int) -> float:
    """Exponent ``E`` with ``P(level-n box untouched) = exp(-lambda * E)``."""
    _check_level(n)
    tail = sum(
        math.comb(d, k) * n ** (k - d) * (n ** (d - k) - 1) / (d - k) for k in range(d)
    )
    return math.log(n) + tail


def single_cover_exponent(model: Model, n: int, d: int, radius_floor: float | None = None) -> float:
    """Exponent with ``P(level-n box inside no single grain) = exp(-lambda * E)``.

    Grains of every radius that could contain the box are counted. Pass
    ``radius_floor=1/n`` to count only grains of radius ``>= 1/n``, which is
    the event behind ``M_n``; for boxes, and for balls in d >= 4, the two agree.

    For balls this is the mass of balls containing the box's circumscribed
    ball. That event equals containment of the box only in d=1; for d >= 2 it
    is strictly smaller, so ``exp(-lambda * E)`` is an upper bound there.
    """
    _check_level(n)
    model = Model(model)
    with mpmath.workdps(_DPS):
        floor = mpmath.mpf(0) if radius_floor is None else mpmath.mpf(radius_floor)
        if model is Model.BOX:
            a = mpmath.mpf(1) / n
            return _shifted_power_integral([a] * d, max(a, floor))
        if not n > math.sqrt(d) / 2:
            raise ValueError(f"no ball of radius <= 1 covers a level-{n} box in dimension {d}")
        a = mpmath.sqrt(d) / (2 * n)
        return unit_ball_volume(d) * _shifted_power_integral([a] * d, max(a, floor))


def pair_intersection_box(n: int, d: int, k: Sequence[int]) -> float:
    """mu-mass of boxes (side >= 1/n) touching both ``X`` and ``X + k/n``."""
    _check_level(n)
    if len(k) != d:
        raise ValueError(f"offset {tuple(k)} does not have {d} coordinates")
    with mpmath.workdps(_DPS):
        # Per coordinate the admissible centres form an interval of length
        # max(0, r - (|k_i| - 1)/n).
        shifts = [mpmath.mpf(abs(int(ki)) - 1) / n for ki in k]
        lo = max([mpmath.mpf(1) / n] + shifts)
        if lo >= 1:
            return 0.0
        return _shifted_power_integral(shifts, lo)


def pair_exponent_box(n: int, d: int, k: Sequence[int]) -> float:
    """``mu(R1 u R2)`` for the level-n boxes ``X`` and ``X + k/n``."""
    return 2.0 * untouched_exponent_box(n, d) - pair_intersection_box(n, d, k)


@dataclass(frozen=True)
class ScaleCheck:
    passed: bool
    base: float
    scaled: float
    residual: float


def scale_invariance_check(model: Model, eps: float, d: int) -> ScaleCheck:
    """Compare the hitting mass at scale 1 and at scale ``eps`` by quadrature.

    Ball: balls containing the origin, radii in ``[eps, 1]`` against
    ``[eps^2, eps]``. Box: boxes meeting ``[0, 1]^d`` with sides in
    ``[eps, 1]`` against boxes meeting ``[0, eps]^d`` with sides in
    ``[eps^2, eps]``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    model = Model(model)
    if model is Model.BALL:
        vd = unit_ball_volume(d)

        def base_f(r):
            return vd * r**d * r ** (-d - 1)

        scaled_f = base_f
    else:
        def base_f(r):
            return (1.0 + r) ** d * r ** (-d - 1)

        def scaled_f(r):
            return (eps + r) ** d * r ** (-d - 1)

    base = integrate(base_f, eps, 1.0)
    scaled = integrate(scaled_f, eps * eps, eps)
    residual = abs(base - scaled)
    return ScaleCheck(residual < 1e-9 * (1.0 + abs(base)), base, scaled, residual)


# -- integrals behind the emptiness criteria -----------------------------------


def _log_correction(law: RadiusLaw, u: float, power: int) -> float:
    """``sign * int_u^knee (1 - u/r)^power * 2/|log r| * dr/r`` in log-radius."""
    if not law.sign or u >= law.knee:
        return 0.0
    t_lo, t_hi = -math.log(law.knee), -math.log(u)

    def f(t):
        return (1.0 - u * math.exp(t)) ** power * 2.0 / t

    return law.sign * integrate(f, t_lo, t_hi, rtol=1e-10)


def necessary_integral(law: RadiusLaw, u: float) -> float:
    """``int_u^1 r^(d-1) (r - u) nu(dr)``."""
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must lie in (0, 1], got {u}")
    base = math.log(1.0 / u) - 1.0 + u
    return base + _log_correction(law, u, 1)


def sufficient_integral(law: RadiusLaw, u: float) -> float:
    """``int_u^1 (r - u)^d nu(dr)``."""
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must lie in (0, 1], got {u}")
    base = _sufficient_power(u, law.dim)
    return base + _log_correction(law, u, law.dim)


@lru_cache(maxsize=4096)
def _sufficient_power(u: float, d: int) -> float:
    return _shifted_power_integral([u] * d, u)
