"""Sampling the Poisson configuration of grains with radius in ``[1/n, 1]``.

Centres are drawn uniformly on the window dilated by 1 in sup-norm, for all
radii. Every grain of radius at most 1 that meets the window has its centre
there, so the restriction to the window is exact; grains that cannot reach
the window are kept so that refinement and thinning stay consistent.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, replace
from typing import Iterable, TextIO

import numpy as np

from .grains import Grain, Model, Window
from .measure import IntensitySpec, LawKind, RadiusLaw, radius_tail_mass
from .rng import derive_seed, generator


class UnsupportedLawError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SoupSample:
    spec: IntensitySpec
    level: int
    window: Window
    seed: int
    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float).reshape(-1, self.spec.dim)
        radii = np.array(self.radii, dtype=float).reshape(-1)
        if len(centers) != len(radii):
            raise ValueError("centers and radii disagree in length")
        if self.window.dim != self.spec.dim:
            raise ValueError("window and spec dimensions differ")
        centers.flags.writeable = False
        radii.flags.writeable = False
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def model(self) -> Model:
        return self.spec.model

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def grains(self) -> list[Grain]:
        return [Grain(self.model, tuple(c), float(r)) for c, r in zip(self.centers, self.radii)]

    def restricted(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Centres and radii of the grains with radius ``>= 1/n``."""
        keep = self.radii >= 1.0 / n
        return self.centers[keep], self.radii[keep]

    @classmethod
    def from_grains(cls, spec: IntensitySpec, level: int, grains: Iterable[Grain],
                    window: Window | None = None, seed: int = 0) -> "SoupSample":
        grains = list(grains)
        for g in grains:
            if g.kind is not spec.model or g.dim != spec.dim:
                raise ValueError(f"grain {g} does not match {spec.model.value} model in d={spec.dim}")
        return cls(
            spec, level, window or Window.unit(spec.dim), seed,
            np.array([g.center for g in grains], dtype=float).reshape(-1, spec.dim),
            np.array([g.radius for g in grains], dtype=float),
        )


def _band_radii(u: np.ndarray, r_lo: float, r_hi: float, d: int, closed_top: bool) -> np.ndarray:
    a, b = r_lo**-d, r_hi**-d
    r = (a - u * (a - b)) ** (-1.0 / d)
    top = r_hi if closed_top else np.nextafter(r_hi, 0.0)
    return np.clip(r, r_lo, top)


def sample_radius(u, n: int, d: int):
    """Inverse CDF of the radius law ``r^(-d-1)`` truncated to ``[1/n, 1]``."""
    if n < 2:
        raise ValueError(f"radius law on [1/n, 1] is degenerate for n={n}")
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise ValueError("u must lie in [0, 1)")
    r = _band_radii(arr, 1.0 / n, 1.0, d, closed_top=True)
    return float(r) if np.ndim(u) == 0 else r


def _draw_band(spec: IntensitySpec, window: Window, r_lo: float, r_hi: float, seed: int,
               closed_top: bool) -> tuple[np.ndarray, np.ndarray]:
    d = spec.dim
    region = window.dilated(1.0)
    mean = spec.lam * region.volume * radius_tail_mass(r_lo, r_hi, d)
    rng = generator(seed)
    count = rng.poisson(mean)
    radii = _band_radii(rng.random(count), r_lo, r_hi, d, closed_top)
    lo, hi = np.array(region.lo), np.array(region.hi)
    centers = lo + (hi - lo) * rng.random((count, d))
    return centers, radii


def _check_law(spec: IntensitySpec) -> None:
    if spec.law.kind is not LawKind.POWER:
        raise UnsupportedLawError(f"sampling supports the pure-power law only, got {spec.law.kind.value}")


def sample_soup(spec: IntensitySpec, window: Window | None, n: int, seed: int) -> SoupSample:
    """Grains of radius ``[1/n, 1]`` with centres in ``window`` dilated by 1."""
    _check_law(spec)
    if int(n) != n or n < 1:
        raise ValueError(f"level must be a positive integer, got {n}")
    window = window or Window.unit(spec.dim)
    if window.dim != spec.dim:
        raise ValueError("window and spec dimensions differ")
    if n == 1:
        centers, radii = np.empty((0, spec.dim)), np.empty(0)
    else:
        centers, radii = _draw_band(spec, window, 1.0 / n, 1.0, seed, closed_top=True)
    return SoupSample(spec, int(n), window, int(seed), centers, radii)


def refine_soup(s: SoupSample, m: int) -> SoupSample:
    """Add an independent band of radii ``[1/m, 1/n)``; existing grains are kept."""
    if m < s.level:
        raise ValueError(f"cannot refine level {s.level} down to {m}")
    if m == s.level:
        return s
    _check_law(s.spec)
    centers, radii = _draw_band(
        s.spec, s.window, 1.0 / m, 1.0 / s.level, derive_seed(s.seed, "refine", m), closed_top=False
    )
    return replace(
        s, level=int(m),
        centers=np.concatenate([s.centers, centers]),
        radii=np.concatenate([s.radii, radii]),
    )


def thin_to_lambda(s: SoupSample, lambda_prime: float, seed2: int) -> SoupSample:
    """Keep each grain independently with probability ``lambda_prime / lambda``."""
    lam = s.spec.lam
    if not 0.0 < lambda_prime <= lam:
        raise ValueError(f"lambda_prime must lie in (0, {lam}], got {lambda_prime}")
    keep = generator(seed2).random(len(s)) < lambda_prime / lam
    return replace(
        s, spec=replace(s.spec, lam=float(lambda_prime)),
        centers=s.centers[keep], radii=s.radii[keep],
    )


# -- text format -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_soup(s: SoupSample, fh: TextIO) -> None:
    """Header line, then ``kind c_1 ... c_d radius`` per grain."""
    fh.write(
        f"# model={s.model.value} d={s.dim} lambda={_fmt(s.spec.lam)} n={s.level} seed={s.seed}"
        f" window_lo={','.join(map(_fmt, s.window.lo))} window_hi={','.join(map(_fmt, s.window.hi))}\n"
    )
    kind = s.model.value
    for c, r in zip(s.centers, s.radii):
        fh.write(" ".join([kind, *map(_fmt, c), _fmt(r)]) + "\n")


def dumps_soup(s: SoupSample) -> str:
    buf = io.StringIO()
    write_soup(s, buf)
    return buf.getvalue()


_HEADER = re.compile(r"(\w+)=(\S+)")


def loads_soup(text: str) -> SoupSample:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing soup header line")
    head = dict(_HEADER.findall(lines[0]))
    try:
        model, d = Model(head["model"]), int(head["d"])
        spec = IntensitySpec(model, d, float(head["lambda"]), RadiusLaw(LawKind.POWER, d))
        level, seed = int(head["n"]), int(head["seed"])
    except KeyError as exc:
        raise ValueError(f"soup header lacks {exc}") from None
    if "window_lo" in head:
        window = Window(tuple(map(float, head["window_lo"].split(","))),
                        tuple(map(float, head["window_hi"].split(","))))
    else:
        window = Window.unit(d)
    rows = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] != model.value or len(parts) != d + 2:
            raise ValueError(f"malformed grain line: {ln!r}")
        rows.append([float(x) for x in parts[1:]])
    arr = np.array(rows, dtype=float).reshape(-1, d + 1)
    return SoupSample(spec, level, window, seed, arr[:, :d], arr[:, d])
