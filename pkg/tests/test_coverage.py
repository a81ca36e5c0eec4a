import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from poisson_fractal.coverage import (
    COVERED,
    UNDETERMINED,
    VACANT,
    CoverageReport,
    InsufficientResolutionError,
    analyse,
    box_verdicts,
    candidate_pairs,
    coverage_report,
    covering_number_bounds,
    single_uncovered_boxes,
    single_uncovered_boxes_bruteforce,
    untouched_boxes,
    untouched_boxes_bruteforce,
)
from poisson_fractal.estimators import coupled_pair
from poisson_fractal.grains import Grain, LevelBox, Model, Window, grain_intersects, level_boxes
from poisson_fractal.measure import IntensitySpec
from poisson_fractal.soup import SoupSample, refine_soup, sample_soup


def soup(model, d, grains, level=64):
    spec = IntensitySpec(model, d, 1.0)
    return SoupSample.from_grains(spec, level, [Grain(model, c, r) for c, r in grains])


def test_empty_soup():
    for d, n in [(1, 5), (2, 4), (3, 2)]:
        s = soup(Model.BALL, d, [])
        assert len(untouched_boxes(s, n)) == n**d
        assert len(single_uncovered_boxes(s, n)) == n**d
        assert covering_number_bounds(s, n, 3) == (n**d, n**d, 0)


def test_single_big_ball_covers_everything():
    s = soup(Model.BALL, 1, [((0.5,), 1.0)])
    assert untouched_boxes(s, 2) == set()
    assert single_uncovered_boxes(s, 2) == set()
    assert covering_number_bounds(s, 4, 10) == (0, 0, 0)


def test_shared_vacant_point_charged_to_left_box():
    # Grains (-1, 0.5) and (0.5, 2) leave exactly the point 1/2 vacant in [0, 1].
    s = soup(Model.BALL, 1, [((-0.25,), 0.75), ((1.25,), 0.75)], level=20)
    assert covering_number_bounds(s, 2, 20) == (1, 1, 0)
    assert box_verdicts(s, 2, 20).tolist() == [VACANT, COVERED]
    assert oracles.exact_covering_number_1d("ball", [(-0.25, 0.75), (1.25, 0.75)], 2) == 1


def test_small_grains_are_not_in_phi_n():
    # Radius 1/4 < 1/2: at level 2 these grains do not count, so both boxes stay vacant.
    s = soup(Model.BALL, 1, [((0.25,), 0.25), ((0.75,), 0.25)], level=20)
    assert covering_number_bounds(s, 2, 20) == (2, 2, 0)
    lo, hi, _ = covering_number_bounds(s, 4, 20)
    # At level 4 only 0, 1/2 and 1 are vacant: boxes 0 and 1 claim them, box 3 claims 1.
    assert (lo, hi) == (3, 3)
    assert oracles.exact_covering_number_1d("ball", [(0.25, 0.25), (0.75, 0.25)], 4) == 3


def test_errors():
    s = sample_soup(IntensitySpec(Model.BOX, 1, 1.0), None, 4, 0)
    with pytest.raises(InsufficientResolutionError):
        untouched_boxes(s, 8)
    with pytest.raises(InsufficientResolutionError):
        covering_number_bounds(s, 8, 3)
    with pytest.raises(ValueError):
        covering_number_bounds(s, 4, -1)
    small = sample_soup(IntensitySpec(Model.BOX, 1, 1.0), Window((0.0,), (0.5,)), 4, 0)
    with pytest.raises(ValueError):
        analyse(small, 4)


def test_report_invariant_enforced():
    with pytest.raises(AssertionError):
        CoverageReport(2, 2, 1, 1, 1, 0, 10)
    rep = CoverageReport(2, 0, 2, 1, 2, 1, 10)
    assert rep.as_row()["covering_hi"] == 2


# -- production path against the quadratic references ------------------------------

@pytest.mark.parametrize("model", list(Model))
@pytest.mark.parametrize("d, n, lam", [(1, 16, 1.0), (1, 64, 0.5), (2, 8, 1.5), (3, 4, 0.7)])
def test_bruteforce_equivalence(model, d, n, lam):
    spec = IntensitySpec(model, d, lam)
    for seed in range(25):
        s = sample_soup(spec, None, n, seed)
        for m in {1, max(1, n // 2), n}:
            assert untouched_boxes(s, m) == untouched_boxes_bruteforce(s, m)
            assert single_uncovered_boxes(s, m) == single_uncovered_boxes_bruteforce(s, m)


def test_candidate_pairs_are_exact():
    rng = np.random.default_rng(3)
    for model in Model:
        for d in (1, 2):
            n = 6
            centers = rng.uniform(-1, 2, (40, d))
            radii = rng.uniform(1 / n, 1, 40)
            pg, pb = candidate_pairs(model, centers, radii, n)
            assert np.all(np.diff(pb) >= 0)
            got = set(zip(pg.tolist(), pb.tolist()))
            boxes = list(level_boxes(n, d))
            want = {
                (gi, bi)
                for gi in range(40)
                for bi, b in enumerate(boxes)
                if grain_intersects(Grain(model, tuple(centers[gi]), radii[gi]), b)
            }
            assert got == want


@pytest.mark.parametrize("model", list(Model))
@pytest.mark.parametrize("d, n, lam", [(1, 32, 0.5), (1, 8, 1.0), (2, 8, 1.0), (3, 4, 1.0)])
def test_chain_of_inequalities(model, d, n, lam):
    spec = IntensitySpec(model, d, lam)
    for seed in range(30):
        rep = coverage_report(sample_soup(spec, None, n, seed), n, 6)
        assert rep.untouched_count <= rep.covering_lo <= rep.covering_hi <= rep.single_uncovered_count
        assert rep.covering_hi - rep.covering_lo == rep.undetermined_cells


@pytest.mark.parametrize("model", list(Model))
@pytest.mark.parametrize("d, n", [(1, 16), (2, 8)])
def test_depth_cap_monotone(model, d, n):
    spec = IntensitySpec(model, d, 1.0)
    for seed in range(15):
        s = sample_soup(spec, None, n, seed)
        prev = None
        for cap in range(0, 9):
            lo, hi, _ = covering_number_bounds(s, n, cap)
            if prev:
                assert lo >= prev[0] and hi <= prev[1]
            prev = (lo, hi)


def test_untouched_boxes_are_vacant():
    spec = IntensitySpec(Model.BALL, 2, 1.0)
    for seed in range(20):
        a = analyse(sample_soup(spec, None, 8, seed), 8, 4)
        assert np.all(a.verdict[a.untouched] == VACANT)
        assert np.all(a.uncovered[a.verdict != COVERED])


@pytest.mark.parametrize("model", list(Model))
@pytest.mark.parametrize("d, n", [(1, 8), (2, 4)])
def test_refinement_shrinks_vacant_boxes(model, d, n):
    spec = IntensitySpec(model, d, 0.8)
    for seed in range(30):
        s = sample_soup(spec, None, n, seed)
        coarse = box_verdicts(s, n, 8)
        fine = box_verdicts(refine_soup(s, 2 * n), 2 * n, 8)
        for idx in np.argwhere(fine == VACANT):
            assert coarse[tuple(idx // 2)] != COVERED


def test_coupling_monotone_per_replicate():
    spec = IntensitySpec(Model.BOX, 1, 2.0)
    for seed in range(100):
        s = sample_soup(spec, None, 16, seed)
        pair = coupled_pair(s, 16, 1.0, seed)
        assert pair.monotone and pair.subset


# -- exact one-dimensional vacant set -------------------------------------------------

def _random_1d_grains(rng, kind, dyadic):
    k = int(rng.integers(0, 7))
    if dyadic:
        c = rng.integers(-8, 25, k) / 16
        r = rng.integers(2, 17, k) / 16
    else:
        c = rng.uniform(-0.5, 1.5, k)
        r = rng.uniform(0.125, 1.0, k)
    return [(float(a), float(b)) for a, b in zip(c, r)]


@pytest.mark.parametrize("kind", ["ball", "box"])
@pytest.mark.parametrize("dyadic", [False, True])
def test_bounds_bracket_exact_1d(kind, dyadic):
    rng = np.random.default_rng(17 + dyadic)
    exact_hits = 0
    for _ in range(300):
        grains = _random_1d_grains(rng, kind, dyadic)
        s = soup(Model(kind), 1, [((c,), r) for c, r in grains], level=8)
        for n in (2, 4, 8):
            lo, hi, undet = covering_number_bounds(s, n, 16)
            exact = oracles.exact_covering_number_1d(kind, grains, n)
            assert lo <= exact <= hi, (grains, n, lo, hi, exact)
            exact_hits += lo == hi
    assert exact_hits > 0


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["ball", "box"]),
    st.lists(st.tuples(st.floats(-0.5, 1.5), st.floats(0.125, 1.0)), max_size=6),
    st.sampled_from([2, 4, 8]),
)
def test_bounds_bracket_exact_1d_hypothesis(kind, grains, n):
    s = soup(Model(kind), 1, [((c,), r) for c, r in grains], level=8)
    lo, hi, _ = covering_number_bounds(s, n, 12)
    assert lo <= oracles.exact_covering_number_1d(kind, grains, n) <= hi


def test_generic_soups_resolve_fully():
    spec = IntensitySpec(Model.BOX, 1, 1.0)
    undet = sum(covering_number_bounds(sample_soup(spec, None, 64, s), 64)[2] for s in range(100))
    assert undet == 0


def test_level_box_sets_have_correct_level():
    s = soup(Model.BOX, 2, [((0.25, 0.25), 0.6)], level=4)
    assert LevelBox(4, (0, 0)) not in single_uncovered_boxes(s, 4)
    assert LevelBox(4, (0, 0)) not in untouched_boxes(s, 4)
    assert LevelBox(4, (3, 3)) in untouched_boxes(s, 4)
    assert UNDETERMINED not in box_verdicts(s, 4, 10)
