import math
from itertools import combinations_with_replacement

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpo.oracle import (
    ConstantSpec,
    GaussianWellSpec,
    OracleHandle,
    PlantedMinSpec,
    make_synthetic,
)
from lpo.raster import FaceBox
from lpo.search import (
    DEParams,
    SearchConfig,
    SearchOracleFailure,
    SearchSpaceError,
    admissible_positions,
    de_search,
    enumerate_placements,
    eye_exclusion_preset,
    grid_search,
    placement_count,
)
from lpo.spotmodel import SpotParams, render_spot

from conftest import solid_image

GREEN = (140, 255, 130)


def spot(w, h):
    return render_spot(SpotParams(colour=GREEN, opacity=0.9, size=(w, h)), 100)


class _CallableBackend:
    """Test-only oracle backend scoring a placement with a plain function."""

    def __init__(self, fn):
        self.fn = fn

    def query(self, image, placement=None):
        from lpo.oracle import Detection

        conf = self.fn(placement)
        return [Detection(FaceBox(0, 0, image.width, image.height, conf), conf)]


def callable_oracle(fn):
    return OracleHandle(kind="synthetic", endpoint="custom", parallel_safe=True,
                        backend=_CallableBackend(fn))


class TestEnumeration:
    def test_three_by_three_lattice_row_major(self):
        config = SearchConfig(pixel_increment=40)
        positions = admissible_positions((100, 100), (20, 20), config)
        assert positions == [
            (10, 10), (50, 10), (90, 10),
            (10, 50), (50, 50), (90, 50),
            (10, 90), (50, 90), (90, 90),
        ]
        placements = list(enumerate_placements((100, 100), (20, 20), config))
        assert len(placements) == 9
        assert [p.centers[0] for p in placements] == positions

    def test_two_spot_multisets(self):
        config = SearchConfig(pixel_increment=60, spot_count=2)
        positions = admissible_positions((80, 20), (20, 20), config)
        assert len(positions) == 2
        placements = list(enumerate_placements((80, 20), (20, 20), config))
        assert len(placements) == 3  # C(2+1, 2)
        a, b = positions
        assert [p.centers for p in placements] == [(a, a), (a, b), (b, b)]

    def test_full_exclusion_has_distinct_error_code(self):
        config = SearchConfig(pixel_increment=10, exclusions=(FaceBox(0, 0, 100, 100),))
        with pytest.raises(SearchSpaceError, match="no admissible placements") as err:
            admissible_positions((100, 100), (20, 20), config)
        assert err.value.code == "no-admissible-placements"

    def test_oversized_spot_has_distinct_error_code(self):
        with pytest.raises(SearchSpaceError) as err:
            admissible_positions((10, 10), (20, 20), SearchConfig(pixel_increment=1))
        assert err.value.code == "spot-too-large"

    def test_excluded_footprints_are_omitted(self):
        config = SearchConfig(
            pixel_increment=40, exclusions=(FaceBox(40, 40, 60, 60),)
        )
        positions = admissible_positions((100, 100), (20, 20), config)
        assert (50, 50) not in positions
        assert len(positions) == 8

    @given(st.integers(10, 64), st.integers(10, 64), st.integers(2, 12),
           st.integers(2, 12), st.sampled_from([4, 8, 16]), st.integers(1, 3))
    @settings(max_examples=50, deadline=None)
    def test_closed_form_count(self, cw, ch, sw, sh, inc, k):
        if sw > cw or sh > ch:
            return
        config = SearchConfig(pixel_increment=inc, spot_count=k)
        positions = admissible_positions((cw, ch), (sw, sh), config)
        expected = placement_count(len(positions), k)
        if expected <= 4000:
            assert sum(1 for _ in enumerate_placements((cw, ch), (sw, sh), config)) == expected


class TestGridSearch:
    def test_constant_oracle_ties_break_to_index_zero(self):
        oracle = make_synthetic(ConstantSpec(0.7))
        outcome = grid_search(solid_image(60, 60), spot(20, 20),
                              oracle, SearchConfig(pixel_increment=20))
        assert outcome.lowest_confidence_index == 0
        assert outcome.best_confidence == 0.7
        assert outcome.best_placement.centers == ((10, 10),)

    def test_planted_minimum_found_on_lattice(self):
        oracle = make_synthetic(PlantedMinSpec((60, 40), radius=30, floor=0.2))
        outcome = grid_search(solid_image(100, 100), spot(20, 20),
                              oracle, SearchConfig(pixel_increment=10))
        assert outcome.best_placement.centers == ((60, 40),)
        assert outcome.best_confidence == pytest.approx(0.2)

    def test_iterations_match_closed_form(self):
        config = SearchConfig(pixel_increment=16, spot_count=2)
        positions = admissible_positions((48, 48), (12, 12), config)
        oracle = make_synthetic(ConstantSpec(0.5))
        outcome = grid_search(solid_image(48, 48), spot(12, 12), oracle, config)
        assert outcome.iterations == placement_count(len(positions), 2)
        assert outcome.lowest_confidence_index < outcome.iterations

    def test_matches_independent_reference_loop(self):
        spec = GaussianWellSpec(((31, 17, 0.6, 9), (8, 40, 0.3, 6)), baseline=0.95)
        oracle = make_synthetic(spec)
        config = SearchConfig(pixel_increment=4, spot_count=2)
        crop_img = solid_image(48, 48)
        outcome = grid_search(crop_img, spot(12, 12), oracle, config)

        # reference: raw nested scan, no shared search code
        inc, sw, sh, k = 4, 12, 12, 2
        xs = list(range(6, 48 - 12 + 6 + 1, inc))
        ys = list(range(6, 48 - 12 + 6 + 1, inc))
        singles = [(px, py) for py in ys for px in xs]
        best = None
        for idx, combo in enumerate(combinations_with_replacement(singles, k)):
            conf = min(spec.field_at(c) for c in combo)
            if best is None or conf < best[0]:
                best = (conf, idx, combo)
        assert outcome.best_confidence == pytest.approx(best[0])
        assert outcome.lowest_confidence_index == best[1]
        assert outcome.best_placement.centers == best[2]

    def test_trace_kept_on_request_and_consistent(self):
        oracle = make_synthetic(PlantedMinSpec((30, 30), radius=20, floor=0.1))
        config = SearchConfig(pixel_increment=20, keep_trace=True)
        outcome = grid_search(solid_image(60, 60), spot(10, 10), oracle, config)
        assert outcome.trace is not None
        assert len(outcome.trace) == outcome.iterations
        confs = [conf for _, _, conf in outcome.trace]
        assert min(confs) == outcome.best_confidence
        assert confs.index(min(confs)) == outcome.lowest_confidence_index
        no_trace = grid_search(solid_image(60, 60), spot(10, 10), oracle,
                               SearchConfig(pixel_increment=20))
        assert no_trace.trace is None

    def test_parallel_equals_serial(self):
        spec = GaussianWellSpec(((25, 35, 0.7, 12),), baseline=0.9)
        oracle = make_synthetic(spec)
        config = SearchConfig(pixel_increment=8, keep_trace=True)
        crop_img = solid_image(64, 64)
        serial = grid_search(crop_img, spot(16, 16), oracle, config, workers=1)
        parallel = grid_search(crop_img, spot(16, 16), oracle, config, workers=4)
        assert serial.best_placement == parallel.best_placement
        assert serial.best_confidence == parallel.best_confidence
        assert serial.lowest_confidence_index == parallel.lowest_confidence_index
        assert serial.trace == parallel.trace

    def test_coarser_lattice_never_beats_finer_subset(self):
        spec = GaussianWellSpec(((37, 23, 0.8, 7),), baseline=1.0)
        oracle = make_synthetic(spec)
        crop_img = solid_image(64, 64)
        fine = grid_search(crop_img, spot(8, 8), oracle, SearchConfig(pixel_increment=4))
        coarse = grid_search(crop_img, spot(8, 8), oracle, SearchConfig(pixel_increment=8))
        assert fine.best_confidence <= coarse.best_confidence

    def test_removing_exclusions_never_raises_best_confidence(self):
        spec = PlantedMinSpec((32, 32), radius=30, floor=0.05)
        oracle = make_synthetic(spec)
        crop_img = solid_image(64, 64)
        excl = SearchConfig(pixel_increment=8, exclusions=(FaceBox(20, 20, 44, 44),))
        free = SearchConfig(pixel_increment=8)
        with_excl = grid_search(crop_img, spot(8, 8), oracle, excl)
        without = grid_search(crop_img, spot(8, 8), oracle, free)
        assert without.best_confidence <= with_excl.best_confidence

    def test_oracle_failure_reports_candidate_index(self):
        calls = {"n": 0}

        class Boom:
            def query(self, image, placement=None):
                from lpo.oracle import Detection, OracleError

                calls["n"] += 1
                if calls["n"] == 3:
                    raise OracleError("backend blew up")
                return [Detection(FaceBox(0, 0, 1, 1, 0.5), 0.5)]

        oracle = OracleHandle(kind="synthetic", endpoint="boom", parallel_safe=False,
                              backend=Boom())
        with pytest.raises(SearchOracleFailure, match="candidate 2") as err:
            grid_search(solid_image(60, 60), spot(20, 20), oracle,
                        SearchConfig(pixel_increment=20))
        assert err.value.candidate_index == 2


class TestDifferentialEvolution:
    def test_degenerate_space_returns_the_only_point(self):
        # spot as large as the crop: every individual sits on the single center
        oracle = make_synthetic(ConstantSpec(0.6))
        config = SearchConfig(pixel_increment=1, strategy="de",
                              de_params=DEParams(population=6, generations=3, seed=1))
        outcome = de_search(solid_image(20, 20), spot(20, 20), oracle, config)
        assert outcome.best_placement.centers == ((10, 10),)
        assert outcome.best_confidence == 0.6
        assert outcome.iterations == 6 * 4

    def test_reproducible_from_seed(self):
        spec = GaussianWellSpec(((80, 120, 0.9, 30),), baseline=1.0)
        oracle = make_synthetic(spec)
        config = SearchConfig(pixel_increment=10, strategy="de", keep_trace=True,
                              de_params=DEParams(population=8, generations=10, seed=42))
        a = de_search(solid_image(200, 200), spot(16, 16), oracle, config)
        b = de_search(solid_image(200, 200), spot(16, 16), oracle, config)
        assert a.best_placement == b.best_placement
        assert a.trace == b.trace
        confs = [conf for _, _, conf in a.trace]
        assert min(confs) == a.best_confidence
        assert confs.index(min(confs)) == a.lowest_confidence_index

    def test_converges_to_gaussian_well(self):
        spec = GaussianWellSpec(((120, 80, 0.8, 40),), baseline=1.0)
        oracle = make_synthetic(spec)
        hits = 0
        for seed in range(20):
            config = SearchConfig(pixel_increment=20, strategy="de",
                                  de_params=DEParams(population=20, generations=50, seed=seed))
            outcome = de_search(solid_image(200, 200), spot(16, 16), oracle, config)
            center = outcome.best_placement.centers[0]
            if math.dist(center, (120, 80)) <= 20:
                hits += 1
        assert hits >= 19

    def test_never_returns_inadmissible_placement(self):
        band = FaceBox(10, 20, 90, 45)
        spec = PlantedMinSpec((50, 30), radius=40, floor=0.05)
        oracle = make_synthetic(spec)
        for seed in range(25):
            config = SearchConfig(pixel_increment=10, strategy="de",
                                  exclusions=(band,),
                                  de_params=DEParams(population=10, generations=15, seed=seed))
            outcome = de_search(solid_image(100, 100), spot(12, 12), oracle, config)
            for (px, py) in outcome.best_placement.centers:
                x0, y0 = px - 6, py - 6
                assert not (x0 < band.x2 and x0 + 12 > band.x1
                            and y0 < band.y2 and y0 + 12 > band.y1)
                assert 0 <= x0 and x0 + 12 <= 100
                assert 0 <= y0 and y0 + 12 <= 100

    def test_iteration_budget_is_population_times_generations_plus_one(self):
        oracle = make_synthetic(ConstantSpec(0.5))
        config = SearchConfig(pixel_increment=5, strategy="de", keep_trace=True,
                              de_params=DEParams(population=5, generations=7, seed=0))
        outcome = de_search(solid_image(50, 50), spot(10, 10), oracle, config)
        assert outcome.iterations == 5 * 8
        assert len(outcome.trace) == outcome.iterations

    def test_quantized_landscape_matches_grid_cell(self):
        # confidence constant within 10px cells: DE and the grid agree on the cell
        inc = 10
        spec = PlantedMinSpec((55, 35), radius=60, floor=0.1)

        def quantized(placement):
            cx, cy = placement[0]
            cell_center = ((cx // inc) * inc + inc / 2, (cy // inc) * inc + inc / 2)
            return spec.evaluate(None, (cell_center,))

        oracle = callable_oracle(quantized)
        grid_out = grid_search(solid_image(100, 100), spot(10, 10), oracle,
                               SearchConfig(pixel_increment=inc))
        de_out = de_search(solid_image(100, 100), spot(10, 10), oracle,
                           SearchConfig(pixel_increment=inc, strategy="de",
                                        de_params=DEParams(population=16, generations=40, seed=3)))
        gx, gy = grid_out.best_placement.centers[0]
        dx, dy = de_out.best_placement.centers[0]
        assert (gx // inc, gy // inc) == (dx // inc, dy // inc)


class TestEyeExclusionPreset:
    def test_hundred_square_band(self):
        boxes = eye_exclusion_preset((100, 100))
        assert [b.as_list() for b in boxes] == [[10, 20, 90, 45]]

    def test_degenerate_crop_yields_no_exclusion(self):
        assert eye_exclusion_preset((1, 1)) == []
        config = SearchConfig(pixel_increment=1,
                              exclusions=tuple(eye_exclusion_preset((1, 1))))
        assert admissible_positions((1, 1), (1, 1), config) == [(0, 0)]

    def test_search_avoids_planted_minimum_inside_band(self):
        band = eye_exclusion_preset((100, 100))
        spec = PlantedMinSpec((50, 30), radius=200, floor=0.1, baseline=0.99)
        oracle = make_synthetic(spec)
        config = SearchConfig(pixel_increment=5, exclusions=tuple(band))
        outcome = grid_search(solid_image(100, 100), spot(10, 10), oracle, config)

        # reference: best admissible candidate by direct scan
        positions = admissible_positions((100, 100), (10, 10), config)
        expected = min(
            (spec.evaluate(None, (p,)), i) for i, p in enumerate(positions)
        )
        assert outcome.best_confidence == pytest.approx(expected[0])
        assert outcome.best_placement.centers == (positions[expected[1]],)
        bx = band[0]
        px, py = outcome.best_placement.centers[0]
        assert not (px - 5 < bx.x2 and px + 5 > bx.x1 and py - 5 < bx.y2 and py + 5 > bx.y1)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(pixel_increment=0)
    with pytest.raises(ValueError):
        SearchConfig(pixel_increment=5, spot_count=0)
    with pytest.raises(ValueError):
        SearchConfig(pixel_increment=5, strategy="annealing")
    with pytest.raises(ValueError):
        DEParams(population=3)
    with pytest.raises(ValueError):
        DEParams(weight=0.0)
    with pytest.raises(ValueError):
        DEParams(crossover=1.5)
    with pytest.raises(ValueError):
        DEParams(generations=0)
