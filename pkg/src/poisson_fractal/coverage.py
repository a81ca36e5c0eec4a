"""Multi-resolution statistics of a realised soup on the unit cube.

For a level ``n`` and the grains with radius ``>= 1/n``:

* untouched boxes (``m_n``): level-n boxes meeting no grain;
* singly-uncovered boxes (``M_n``): level-n boxes inside no single grain;
* covering bounds: two-sided bounds on ``L_n``, the number of level-n boxes
  needed to cover the vacant set inside the unit cube.

A vacant point on a shared face is charged to the lexicographically smallest
box containing it. Box ``k`` is therefore responsible for the half-open region
whose i-th factor is ``(k_i/n, (k_i+1)/n]``, closed at 0 when ``k_i == 0``;
``L_n`` counts the boxes whose region meets the vacant set.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .grains import (
    Grain,
    LevelBox,
    Model,
    contains_many,
    grain_contains,
    grain_intersects,
    intersects_many,
    level_boxes,
    points_in_many,
)
from .soup import SoupSample

COVERED, VACANT, UNDETERMINED = 0, 1, 2
DEFAULT_DEPTH_CAP = 10


class InsufficientResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageReport:
    level: int
    untouched_count: int
    single_uncovered_count: int
    covering_lo: int
    covering_hi: int
    undetermined_cells: int
    depth_cap: int

    def __post_init__(self):
        assert self.untouched_count <= self.covering_lo <= self.covering_hi <= self.single_uncovered_count, self

    def as_row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoxAnalysis:
    """Per-box arrays of shape ``(n,) * d`` for one soup and level."""

    level: int
    untouched: np.ndarray
    uncovered: np.ndarray
    verdict: np.ndarray | None
    depth_cap: int

    def report(self) -> CoverageReport:
        verdict = self.verdict if self.verdict is not None else np.full(self.untouched.shape, UNDETERMINED)
        lo = int(np.count_nonzero(verdict == VACANT))
        undetermined = int(np.count_nonzero(verdict == UNDETERMINED))
        return CoverageReport(
            self.level,
            int(np.count_nonzero(self.untouched)),
            int(np.count_nonzero(self.uncovered)),
            lo,
            lo + undetermined,
            undetermined,
            self.depth_cap,
        )


def _check(s: SoupSample, n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"level must be a positive integer, got {n}")
    if n > s.level:
        raise InsufficientResolutionError(
            f"soup holds radii down to 1/{s.level}; level {n} needs radii down to 1/{n}"
        )
    if not s.window.contains_unit_cube():
        raise ValueError("soup window must contain the unit cube")


@lru_cache(maxsize=64)
def _multi_index(n: int, d: int) -> np.ndarray:
    idx = np.stack(np.unravel_index(np.arange(n**d), (n,) * d), axis=1)
    idx.flags.writeable = False
    return idx


def candidate_pairs(model: Model, centers: np.ndarray, radii: np.ndarray, n: int):
    """Spatial hash: (grain, box) pairs with the grain meeting the level-n box.

    Each grain is hashed into the lattice range covered by its bounding box;
    candidates are then confirmed with the exact predicate. Returns grain
    indices and row-major box indices, sorted by box.
    """
    d = centers.shape[1]
    reach = radii if model is Model.BALL else radii / 2
    first = np.floor((centers - reach[:, None]) * n).astype(np.int64)
    last = np.floor((centers + reach[:, None]) * n).astype(np.int64)
    live = ((last >= 0) & (first <= n - 1)).all(axis=1)
    first = np.maximum(first[live], 0)
    last = np.minimum(last[live], n - 1)
    gids = np.flatnonzero(live)
    extent = last - first + 1
    counts = np.prod(extent, axis=1)
    total = int(counts.sum())
    pair_g = np.repeat(gids, counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    ext = np.repeat(extent, counts, axis=0)
    idx = np.empty((total, d), dtype=np.int64)
    for i in range(d - 1, -1, -1):
        idx[:, i] = local % ext[:, i]
        local //= ext[:, i]
    idx += np.repeat(first, counts, axis=0)
    hit = intersects_many(model, centers[pair_g], radii[pair_g], idx / n, 1.0 / n)
    pair_g, idx = pair_g[hit], idx[hit]
    box = np.ravel_multi_index(tuple(idx.T), (n,) * d) if total else np.empty(0, np.int64)
    order = np.argsort(box, kind="stable")
    return pair_g[order], box[order]


def _mark(size: int, where: np.ndarray) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    out[where] = True
    return out


def _verdicts(model, centers, radii, n, d, pair_g, pair_box, depth_cap):
    nb = n**d
    verdict = np.zeros(nb, dtype=np.int8)
    idx = _multi_index(n, d)
    cell_box = np.arange(nb)
    cell_lo = idx / n
    excl = idx > 0
    p_cell, p_grain = pair_box, pair_g
    side = 1.0 / n
    offsets = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    for depth in range(depth_cap + 1):
        ncell = len(cell_box)
        c, r = centers[p_grain], radii[p_grain]
        if depth:
            keep = intersects_many(model, c, r, cell_lo[p_cell], side)
            p_cell, p_grain, c, r = p_cell[keep], p_grain[keep], c[keep], r[keep]
        covered = _mark(ncell, p_cell[contains_many(model, c, r, cell_lo[p_cell], side, excl[p_cell])])
        center_hit = _mark(ncell, p_cell[points_in_many(model, c, r, cell_lo[p_cell] + side / 2)])
        verdict[cell_box[~center_hit]] = VACANT
        alive = ~covered & (verdict[cell_box] != VACANT)
        if not alive.any():
            break
        if depth == depth_cap:
            pair_alive = alive[p_cell]
            p_cell, c, r = p_cell[pair_alive], c[pair_alive], r[pair_alive]
            for off in offsets.astype(bool):
                retained = ~np.any(excl & ~off, axis=1) & alive
                corner = cell_lo + off * side
                hit = _mark(ncell, p_cell[points_in_many(model, c, r, corner[p_cell])])
                verdict[cell_box[retained & ~hit]] = VACANT
            stuck = cell_box[alive]
            stuck = stuck[verdict[stuck] != VACANT]
            verdict[stuck] = UNDETERMINED
            break
        # Subdivide surviving cells; children inherit the parent's candidates.
        keep_cells = np.flatnonzero(alive)
        newpos = np.full(ncell, -1, dtype=np.int64)
        newpos[keep_cells] = np.arange(len(keep_cells))
        k = len(offsets)
        half = side / 2
        cell_box = np.repeat(cell_box[keep_cells], k)
        cell_lo = (cell_lo[keep_cells][:, None, :] + offsets[None, :, :] * half).reshape(-1, d)
        excl = (excl[keep_cells][:, None, :] & (offsets[None, :, :] == 0)).reshape(-1, d)
        pair_alive = alive[p_cell]
        p_cell = (newpos[p_cell[pair_alive]][:, None] * k + np.arange(k)[None, :]).reshape(-1)
        p_grain = np.repeat(p_grain[pair_alive], k)
        side = half
    return verdict


def analyse(s: SoupSample, n: int, depth_cap: int = DEFAULT_DEPTH_CAP, covering: bool = True) -> BoxAnalysis:
    """All per-box statistics of ``s`` at level ``n`` in one pass."""
    _check(s, n)
    if depth_cap < 0:
        raise ValueError(f"depth_cap must be non-negative, got {depth_cap}")
    d, model = s.dim, s.model
    centers, radii = s.restricted(n)
    pair_g, pair_box = candidate_pairs(model, centers, radii, n)
    shape = (n,) * d
    nb = n**d
    untouched = ~_mark(nb, pair_box)
    box_lo = _multi_index(n, d)[pair_box] / n
    inside = contains_many(model, centers[pair_g], radii[pair_g], box_lo, 1.0 / n)
    uncovered = ~_mark(nb, pair_box[inside])
    verdict = None
    if covering:
        verdict = _verdicts(model, centers, radii, n, d, pair_g, pair_box, depth_cap).reshape(shape)
    return BoxAnalysis(n, untouched.reshape(shape), uncovered.reshape(shape), verdict, depth_cap)


def _as_boxes(mask: np.ndarray, n: int) -> set[LevelBox]:
    return {LevelBox(n, tuple(int(k) for k in idx)) for idx in np.argwhere(mask)}


def untouched_boxes(s: SoupSample, n: int) -> set[LevelBox]:
    return _as_boxes(analyse(s, n, covering=False).untouched, n)


def single_uncovered_boxes(s: SoupSample, n: int) -> set[LevelBox]:
    return _as_boxes(analyse(s, n, covering=False).uncovered, n)


def covering_number_bounds(s: SoupSample, n: int, depth_cap: int = DEFAULT_DEPTH_CAP) -> tuple[int, int, int]:
    """``(lo, hi, undetermined)`` with ``lo <= L_n <= hi``."""
    rep = analyse(s, n, depth_cap).report()
    return rep.covering_lo, rep.covering_hi, rep.undetermined_cells


def box_verdicts(s: SoupSample, n: int, depth_cap: int = DEFAULT_DEPTH_CAP) -> np.ndarray:
    return analyse(s, n, depth_cap).verdict


def coverage_report(s: SoupSample, n: int, depth_cap: int = DEFAULT_DEPTH_CAP) -> CoverageReport:
    return analyse(s, n, depth_cap).report()


# -- reference implementations (quadratic, used as test oracles) -----------------

def _phi_n(s: SoupSample, n: int) -> list[Grain]:
    _check(s, n)
    return [g for g in s.grains if g.radius >= 1.0 / n]


def untouched_boxes_bruteforce(s: SoupSample, n: int) -> set[LevelBox]:
    grains = _phi_n(s, n)
    return {b for b in level_boxes(n, s.dim) if not any(grain_intersects(g, b) for g in grains)}


def single_uncovered_boxes_bruteforce(s: SoupSample, n: int) -> set[LevelBox]:
    grains = _phi_n(s, n)
    return {b for b in level_boxes(n, s.dim) if not any(grain_contains(g, b) for g in grains)}
