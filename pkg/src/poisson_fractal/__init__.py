"""Simulation and exact calculations for the semi-scale-invariant Poisson
fractal ball and box models."""
from .coverage import (
    CoverageReport,
    covering_number_bounds,
    coverage_report,
    single_uncovered_boxes,
    untouched_boxes,
)
from .estimators import (
    MomentReport,
    be_classify,
    exact_first_moment_mn,
    exact_second_moment_mn,
    mc_experiment,
    paley_zygmund_lower,
)
from .grains import Grain, LevelBox, Model, Window, grain_contains, grain_intersects, subdivide
from .measure import IntensitySpec, LawKind, RadiusLaw
from .soup import SoupSample, refine_soup, sample_soup, thin_to_lambda

__version__ = "0.1.0"
