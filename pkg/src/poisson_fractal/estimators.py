"""Exact moments, Monte Carlo experiments and the emptiness classifier."""
from __future__ import annotations

import enum
import itertools
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coverage import DEFAULT_DEPTH_CAP, VACANT, analyse
from .grains import Model, Window
from .measure import (
    IntensitySpec,
    LawKind,
    RadiusLaw,
    necessary_integral,
    pair_exponent_box,
    single_cover_exponent,
    sufficient_integral,
    unit_ball_volume,
    untouched_exponent_box,
)
from .rng import derive_seed
from .soup import sample_soup, thin_to_lambda

MAX_PAIR_CLASSES = 4096


class BudgetError(ValueError):
    pass


class UnsupportedModelError(ValueError):
    pass


def _require_box_power(spec: IntensitySpec) -> None:
    if spec.model is not Model.BOX:
        raise UnsupportedModelError("closed-form m_n moments exist for the box model only")
    if spec.law.kind is not LawKind.POWER:
        raise UnsupportedModelError("closed-form m_n moments need the pure-power law")


def exact_first_moment_mn(spec: IntensitySpec, n: int) -> float:
    _require_box_power(spec)
    d = spec.dim
    return n**d * math.exp(-spec.lam * untouched_exponent_box(n, d))


def _offset_classes(n: int, d: int):
    """Yield ``(|k| sorted, number of ordered box pairs)`` for every offset class."""
    for mags in itertools.combinations_with_replacement(range(n), d):
        perms = math.factorial(d)
        for c in Counter(mags).values():
            perms //= math.factorial(c)
        signs = 2 ** sum(1 for a in mags if a)
        yield mags, perms * signs * math.prod(n - a for a in mags)


def exact_second_moment_mn(spec: IntensitySpec, n: int, max_classes: int = MAX_PAIR_CLASSES) -> float:
    """``E[m_n^2]`` summed over box-pair offsets, grouped by symmetry class."""
    _require_box_power(spec)
    d = spec.dim
    if n**d > max_classes:
        raise BudgetError(f"second moment at n={n}, d={d} needs {n**d} offset classes (budget {max_classes})")
    lam = spec.lam
    return math.fsum(
        weight * math.exp(-lam * pair_exponent_box(n, d, mags)) for mags, weight in _offset_classes(n, d)
    )


def paley_zygmund_lower(spec: IntensitySpec, n: int, max_classes: int = MAX_PAIR_CLASSES) -> float:
    """Second-moment lower bound on ``P(m_n > 0)``."""
    return exact_first_moment_mn(spec, n) ** 2 / exact_second_moment_mn(spec, n, max_classes)


def exact_mean_Mn(spec: IntensitySpec, n: int) -> float:
    """``E|M_n|`` under the pure-power law (ball model: exact for d=1, upper bound otherwise).

    Only grains of radius ``>= 1/n`` count towards ``M_n``.
    """
    d = spec.dim
    if spec.model is Model.BALL and not n > math.sqrt(d) / 2:
        return float(n**d)
    return n**d * math.exp(-spec.lam * single_cover_exponent(spec.model, n, d, radius_floor=1.0 / n))


# -- Monte Carlo -----------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def within(self, target: float, k: float = 4.0) -> bool:
        return abs(self.value - target) <= k * self.stderr


STATISTICS = (
    "mean_mn",
    "second_moment_mn",
    "p_mn_positive",
    "mean_Mn",
    "mean_covering_lo",
    "mean_covering_hi",
    "mean_undetermined",
    "p_origin_untouched",
    "p_origin_uncovered",
)


@dataclass(frozen=True)
class MomentReport:
    spec: IntensitySpec
    level: int
    replicates: int
    mc: dict[str, Estimate]
    exact_mean_mn: float | None = None
    exact_second_moment_mn: float | None = None
    pz_lower_bound: float | None = None
    exact_mean_Mn: float | None = None

    def __post_init__(self):
        if self.pz_lower_bound is not None:
            assert 0.0 <= self.pz_lower_bound <= 1.0 + 1e-12
            assert self.exact_second_moment_mn >= self.exact_mean_mn**2 * (1 - 1e-12)

    @property
    def mc_mean_mn(self) -> Estimate:
        return self.mc["mean_mn"]

    @property
    def mc_second_moment(self) -> Estimate:
        return self.mc["second_moment_mn"]

    @property
    def mc_survival_prob(self) -> Estimate:
        return self.mc["p_mn_positive"]


# Per-replicate columns gathered by the workers.
_COLS = ("mn", "Mn", "lo", "hi", "undet", "origin_untouched", "origin_uncovered", "monotone")


def _replicate_row(spec, window, n, seed_i, depth_cap, covering, couple):
    s = sample_soup(spec, window, n, seed_i)
    a = analyse(s, n, depth_cap, covering=covering)
    origin = (0,) * spec.dim
    row = [
        int(a.untouched.sum()),
        int(a.uncovered.sum()),
        int((a.verdict == VACANT).sum()) if covering else 0,
        0,
        0,
        int(a.untouched[origin]),
        int(a.uncovered[origin]),
        1,
    ]
    if covering:
        rep = a.report()
        row[3], row[4] = rep.covering_hi, rep.undetermined_cells
    if couple is not None:
        row[7] = int(coupled_pair(s, n, couple, seed_i, depth_cap).monotone)
    return row


def _run_chunk(args):
    spec, window, n_list, seeds, depth_cap, covering, couple = args
    return np.array(
        [[_replicate_row(spec, window, n, si, depth_cap, covering, couple) for n in n_list] for si in seeds],
        dtype=np.int64,
    ).reshape(len(seeds), len(n_list), len(_COLS))


def replicate_seeds(seed: int, replicates: int) -> list[int]:
    return [derive_seed(seed, "replicate", i) for i in range(replicates)]


def _gather(spec, window, n_list, replicates, depth_cap, seed, workers, covering, couple):
    seeds = replicate_seeds(seed, replicates)
    workers = max(1, int(workers or os.cpu_count() or 1))
    if workers == 1:
        return _run_chunk((spec, window, n_list, seeds, depth_cap, covering, couple))
    size = max(1, math.ceil(replicates / (4 * workers)))
    chunks = [
        (spec, window, n_list, seeds[i:i + size], depth_cap, covering, couple)
        for i in range(0, replicates, size)
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return np.concatenate(parts, axis=0)


def _estimate(x: np.ndarray) -> Estimate:
    x = x.astype(float)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))))


def mc_experiment(spec: IntensitySpec, window: Window | None, n_list, replicates: int,
                  depth_cap: int = DEFAULT_DEPTH_CAP, seed: int = 0, workers: int = 1,
                  covering: bool = True, couple: float | None = None) -> list[MomentReport]:
    """Monte Carlo moments of the coverage statistics, one report per level.

    Replicate ``i`` uses the soup ``sample_soup(spec, window, n, seed_i)`` with
    ``seed_i`` derived from ``(seed, i)``, so results do not depend on the
    number of workers. With ``covering=False`` the subdivision is skipped and
    the covering statistics are omitted.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    window = window or Window.unit(spec.dim)
    n_list = [int(n) for n in n_list]
    data = _gather(spec, window, n_list, replicates, depth_cap, seed, workers, covering, couple)
    reports = []
    for j, n in enumerate(n_list):
        col = {name: data[:, j, c] for c, name in enumerate(_COLS)}
        mc = {
            "mean_mn": _estimate(col["mn"]),
            "second_moment_mn": _estimate(col["mn"] ** 2),
            "p_mn_positive": _estimate(col["mn"] > 0),
            "mean_Mn": _estimate(col["Mn"]),
            "p_origin_untouched": _estimate(col["origin_untouched"]),
            "p_origin_uncovered": _estimate(col["origin_uncovered"]),
        }
        if covering:
            mc["mean_covering_lo"] = _estimate(col["lo"])
            mc["mean_covering_hi"] = _estimate(col["hi"])
            mc["mean_undetermined"] = _estimate(col["undet"])
        if couple is not None:
            mc["coupling_monotone"] = _estimate(col["monotone"])
        reports.append(_moment_report(spec, n, replicates, mc))
    return reports


def _moment_report(spec, n, replicates, mc) -> MomentReport:
    exact = {}
    if spec.law.kind is LawKind.POWER:
        exact["exact_mean_Mn"] = exact_mean_Mn(spec, n)
        if spec.model is Model.BOX:
            exact["exact_mean_mn"] = exact_first_moment_mn(spec, n)
            if n**spec.dim <= MAX_PAIR_CLASSES:
                exact["exact_second_moment_mn"] = exact_second_moment_mn(spec, n)
                exact["pz_lower_bound"] = exact["exact_mean_mn"] ** 2 / exact["exact_second_moment_mn"]
    return MomentReport(spec, n, replicates, mc, **exact)


@dataclass(frozen=True)
class CoupledPair:
    replicate_seed: int
    subset: bool
    untouched: tuple[int, int]
    covering_lo: tuple[int, int]

    @property
    def monotone(self) -> bool:
        return (self.subset and self.untouched[1] >= self.untouched[0]
                and self.covering_lo[1] >= self.covering_lo[0])


def _is_subset(small: np.ndarray, big: np.ndarray) -> bool:
    pool = Counter(map(bytes, big))
    need = Counter(map(bytes, small))
    return all(pool[k] >= v for k, v in need.items())


def coupled_pair(s, n: int, lambda_prime: float, seed_i: int, depth_cap: int = DEFAULT_DEPTH_CAP) -> CoupledPair:
    """Compare ``s`` with its thinning to ``lambda_prime``; ``(rate lambda, rate lambda')`` tuples."""
    t = thin_to_lambda(s, lambda_prime, derive_seed(seed_i, "thin", float(lambda_prime)))
    rows_s = np.column_stack([s.centers, s.radii])
    rows_t = np.column_stack([t.centers, t.radii])
    a, b = analyse(s, n, depth_cap).report(), analyse(t, n, depth_cap).report()
    return CoupledPair(
        seed_i,
        _is_subset(rows_t, rows_s),
        (a.untouched_count, b.untouched_count),
        (a.covering_lo, b.covering_lo),
    )


def coupling_check(spec: IntensitySpec, window: Window | None, n: int, replicates: int,
                   lambda_prime: float, seed: int = 0, depth_cap: int = DEFAULT_DEPTH_CAP) -> list[CoupledPair]:
    return [
        coupled_pair(sample_soup(spec, window, n, si), n, lambda_prime, si, depth_cap)
        for si in replicate_seeds(seed, replicates)
    ]


# -- emptiness classifier --------------------------------------------------------

class Verdict(str, enum.Enum):
    EMPTY = "Empty"
    NON_EMPTY = "NonEmpty"
    INCONCLUSIVE = "Inconclusive"


BE_GRID = tuple(range(1, 41))
BE_TAIL = 10
BE_TOL = 0.02


@dataclass(frozen=True)
class BEResult:
    verdict: Verdict
    necessary_exponent: float
    sufficient_exponent: float
    necessary_local: tuple[float, ...] = field(repr=False)
    sufficient_local: tuple[float, ...] = field(repr=False)


def _tail_slope(j: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(j[-BE_TAIL:], y[-BE_TAIL:], 1)[0])


def be_classify(law: RadiusLaw, lam: float, d: int) -> BEResult:
    """Heuristic emptiness verdict from the two integral criteria on ``u = 2^-j``.

    Both criteria are read off as power laws in ``u``. For the necessary
    condition the terms ``u * f(u)`` with ``f(u) = u^(d-1) exp(g(u))`` are
    summable along the dyadic grid iff their log2 decays; for the sufficient
    one ``s(u) = u^d exp(h(u))`` diverges iff its log2 grows. The exponent is
    the least-squares slope in ``j`` over the last 10 grid points; slopes
    within 0.02 of zero are treated as borderline.
    """
    if law.dim != d:
        raise ValueError(f"law dimension {law.dim} != {d}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    scale = lam * unit_ball_volume(d) / math.log(2.0)
    j = np.array(BE_GRID, dtype=float)
    u = 2.0 ** -j
    log_f = np.array([-d * jj + scale * necessary_integral(law, uu) for jj, uu in zip(j, u)])
    log_s = np.array([-d * jj + scale * sufficient_integral(law, uu) for jj, uu in zip(j, u)])
    beta_f, beta_s = _tail_slope(j, log_f), _tail_slope(j, log_s)
    if beta_s > BE_TOL:
        verdict = Verdict.EMPTY
    elif beta_f < -BE_TOL:
        verdict = Verdict.NON_EMPTY
    else:
        verdict = Verdict.INCONCLUSIVE
    return BEResult(verdict, beta_f, beta_s, tuple(np.diff(log_f)), tuple(np.diff(log_s)))
