"""Grains, lattice boxes and the exact predicates between them.

Grains are open sets: a ball ``B(x, r)`` or an axis-aligned box
``x + (-r/2, r/2)^d`` (for boxes ``radius`` is the side length). Level-n boxes
are the closed lattice cubes ``k/n + [0, 1/n]^d`` inside the unit cube.

All comparisons are strict where the grain boundary is involved, so the
predicates describe open grains exactly in binary64.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class Model(str, enum.Enum):
    BALL = "ball"
    BOX = "box"


@dataclass(frozen=True)
class Grain:
    kind: Model
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Model(self.kind))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not 0.0 < self.radius <= 1.0:
            raise ValueError(f"grain radius must lie in (0, 1], got {self.radius}")
        if not self.center:
            raise ValueError("grain center must have at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains_point(self, x: Sequence[float]) -> bool:
        _check_dims(self.dim, len(x))
        if self.kind is Model.BALL:
            return sum((xi - ci) ** 2 for xi, ci in zip(x, self.center)) < self.radius**2
        h = self.radius / 2
        return all(ci - h < xi < ci + h for xi, ci in zip(x, self.center))


@dataclass(frozen=True)
class Cube:
    """Closed axis-aligned cube ``lo + [0, side]^d``."""

    lo: tuple[float, ...]
    side: float

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(a + self.side for a in self.lo)

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(a + self.side / 2 for a in self.lo)

    @property
    def volume(self) -> float:
        return self.side**self.dim


@dataclass(frozen=True, order=True)
class LevelBox:
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(k) for k in self.index))
        if self.level < 1:
            raise ValueError(f"level must be positive, got {self.level}")
        if not self.index or any(not 0 <= k < self.level for k in self.index):
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def lo(self) -> tuple[float, ...]:
        return tuple(k / self.level for k in self.index)

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple((k + 1) / self.level for k in self.index)

    @property
    def center(self) -> tuple[float, ...]:
        return tuple((k + 0.5) / self.level for k in self.index)

    def cube(self) -> Cube:
        return Cube(self.lo, 1.0 / self.level)


@dataclass(frozen=True)
class Window:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("window corners must have the same positive dimension")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"window needs lo < hi coordinatewise, got {self.lo}, {self.hi}")

    @classmethod
    def unit(cls, d: int) -> "Window":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def dilated(self, margin: float = 1.0) -> "Window":
        return Window(tuple(a - margin for a in self.lo), tuple(b + margin for b in self.hi))

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    def contains_unit_cube(self) -> bool:
        return all(a <= 0.0 for a in self.lo) and all(b >= 1.0 for b in self.hi)


def _check_dims(d1: int, d2: int) -> None:
    if d1 != d2:
        raise ValueError(f"dimension mismatch: {d1} != {d2}")


def grain_intersects(g: Grain, b: LevelBox) -> bool:
    """True iff the open grain meets the closed level box."""
    _check_dims(g.dim, b.dim)
    lo, hi = b.lo, b.hi
    if g.kind is Model.BALL:
        dist2 = sum(max(a - c, 0.0, c - z) ** 2 for c, a, z in zip(g.center, lo, hi))
        return dist2 < g.radius**2
    h = g.radius / 2
    return all(c - h < z and c + h > a for c, a, z in zip(g.center, lo, hi))


def grain_contains(g: Grain, b: LevelBox) -> bool:
    """True iff the closed level box lies inside the open grain."""
    _check_dims(g.dim, b.dim)
    lo, hi = b.lo, b.hi
    if g.kind is Model.BALL:
        far2 = sum(max(c - a, z - c) ** 2 for c, a, z in zip(g.center, lo, hi))
        return far2 < g.radius**2
    h = g.radius / 2
    return all(c - h < a and z < c + h for c, a, z in zip(g.center, lo, hi))


def subdivide(cube: Cube) -> list[Cube]:
    """Split a closed cube into its 2^d half-side children, lexicographic order."""
    half = cube.side / 2
    return [
        Cube(tuple(a + o * half for a, o in zip(cube.lo, offs)), half)
        for offs in itertools.product((0, 1), repeat=cube.dim)
    ]


def level_boxes(n: int, d: int) -> list[LevelBox]:
    return [LevelBox(n, idx) for idx in itertools.product(range(n), repeat=d)]


# -- vectorised forms -------------------------------------------------------
#
# ``centers`` has shape (P, d), ``radii`` shape (P,), cube corners ``lo`` shape
# (P, d) and ``side`` broadcastable to (P,). Row p pairs one grain with one cube.


def intersects_many(model: Model, centers, radii, lo, side) -> np.ndarray:
    side = np.asarray(side, dtype=float)[..., None] if np.ndim(side) else side
    hi = lo + side
    if model is Model.BALL:
        gap = np.maximum(np.maximum(lo - centers, centers - hi), 0.0)
        return np.einsum("pd,pd->p", gap, gap) < radii**2
    h = (radii / 2)[:, None]
    return np.all((centers - h < hi) & (centers + h > lo), axis=1)


def contains_many(model: Model, centers, radii, lo, side, open_lower=None) -> np.ndarray:
    """Cube-in-grain test; ``open_lower`` marks faces excluded from the cube.

    With ``open_lower[p, i]`` set, the cube's i-th factor is the half-open
    interval ``(lo, lo + side]`` instead of ``[lo, lo + side]``.
    """
    side = np.asarray(side, dtype=float)[..., None] if np.ndim(side) else side
    hi = lo + side
    if model is Model.BALL:
        far = np.maximum(centers - lo, hi - centers)
        r2 = radii**2
        if open_lower is None:
            return np.einsum("pd,pd->p", far, far) < r2
        # Strict convexity of the distance: the half-open cube sits in the open
        # ball iff every corner is within distance <= r and every retained
        # corner is strictly inside.
        ok = np.einsum("pd,pd->p", far, far) <= r2
        d = lo.shape[1]
        for offs in itertools.product((0, 1), repeat=d):
            offs = np.array(offs, dtype=bool)
            corner = np.where(offs, hi, lo)
            retained = ~np.any(open_lower & ~offs, axis=1)
            diff = corner - centers
            ok &= ~retained | (np.einsum("pd,pd->p", diff, diff) < r2)
        return ok
    h = (radii / 2)[:, None]
    left = centers - h
    low_ok = left < lo if open_lower is None else np.where(open_lower, left <= lo, left < lo)
    return np.all(low_ok & (hi < centers + h), axis=1)


def points_in_many(model: Model, centers, radii, points) -> np.ndarray:
    if model is Model.BALL:
        diff = points - centers
        return np.einsum("pd,pd->p", diff, diff) < radii**2
    h = (radii / 2)[:, None]
    return np.all((centers - h < points) & (points < centers + h), axis=1)
