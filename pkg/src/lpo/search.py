"""Spot-placement search over a face crop.

Two strategies minimize the oracle's confidence over candidate spot centers:
an exhaustive scan of a pixel lattice (the brute-force path) and rand/1/bin
differential evolution over continuous coordinates. Both honour exclusion
zones, both report full statistics, and both are deterministic: the grid is
deterministic regardless of evaluation parallelism, DE is reproducible from
its seed.

An earlier multithreaded variant of the scan was slower than the serial one
because every worker contended on the same image resource; the contract here
is therefore only that parallel evaluation must give bit-identical results to
serial, never that it is used.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .oracle import OracleError, OracleHandle, detection_score, query
from .raster import FaceBox, ImageRaster, composite, round_half_up
from .spotmodel import SpotModel


class SearchSpaceError(ValueError):
    """No candidates to search. ``code`` distinguishes the cause."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class SearchOracleFailure(OracleError):
    """The oracle failed mid-search; carries the failing candidate index."""

    def __init__(self, candidate_index: int, cause: Exception):
        super().__init__(f"oracle failed at candidate {candidate_index}: {cause}")
        self.candidate_index = candidate_index


@dataclass(frozen=True)
class Placement:
    """Ordered spot centers [px, py] in crop-local pixels."""

    centers: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.centers) < 1:
            raise ValueError("placement needs at least one spot center")

    def as_lists(self) -> list[list[int]]:
        return [[int(x), int(y)] for x, y in self.centers]


@dataclass(frozen=True)
class DEParams:
    population: int = 20
    weight: float = 0.7
    crossover: float = 0.9
    generations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError(f"DE population {self.population} must be >= 4")
        if not 0.0 < self.weight <= 2.0:
            raise ValueError(f"DE weight {self.weight} outside (0, 2]")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError(f"DE crossover {self.crossover} outside [0, 1]")
        if self.generations < 1:
            raise ValueError(f"DE generations {self.generations} must be >= 1")


@dataclass(frozen=True)
class SearchConfig:
    pixel_increment: int
    spot_count: int = 1
    strategy: str = "grid"
    exclusions: tuple[FaceBox, ...] = ()
    de_params: DEParams = field(default_factory=DEParams)
    keep_trace: bool = False

    def __post_init__(self):
        if self.pixel_increment < 1:
            raise ValueError(f"pixel increment {self.pixel_increment} must be >= 1")
        if self.spot_count < 1:
            raise ValueError(f"spot count {self.spot_count} must be >= 1")
        if self.strategy not in ("grid", "de"):
            raise ValueError(f"strategy {self.strategy!r} must be 'grid' or 'de'")


@dataclass(frozen=True)
class SearchOutcome:
    best_placement: Placement
    best_confidence: float
    iterations: int
    lowest_confidence_index: int
    elapsed: float
    trace: tuple[tuple[int, Placement, float], ...] | None = None


def _footprint(center: tuple[int, int], spot_size: tuple[int, int]) -> tuple[int, int, int, int]:
    w, h = spot_size
    x0 = center[0] - w // 2
    y0 = center[1] - h // 2
    return (x0, y0, x0 + w, y0 + h)


def _hits_exclusion(center, spot_size, exclusions) -> bool:
    x0, y0, x1, y1 = _footprint(center, spot_size)
    for e in exclusions:
        if x0 < e.x2 and x1 > e.x1 and y0 < e.y2 and y1 > e.y1:
            return True
    return False


def _lattice_bounds(crop_size, spot_size) -> tuple[int, int, int, int]:
    """Inclusive center bounds (x_lo, x_hi, y_lo, y_hi) keeping the spot inside."""
    (cw, ch), (sw, sh) = crop_size, spot_size
    if sw > cw or sh > ch:
        raise SearchSpaceError(
            "spot-too-large",
            f"spot {sw}x{sh} does not fit inside {cw}x{ch} crop",
        )
    return (sw // 2, cw - sw + sw // 2, sh // 2, ch - sh + sh // 2)


def admissible_positions(
    crop_size: tuple[int, int],
    spot_size: tuple[int, int],
    config: SearchConfig,
) -> list[tuple[int, int]]:
    """Single-spot lattice centers, row-major, with excluded footprints removed."""
    x_lo, x_hi, y_lo, y_hi = _lattice_bounds(crop_size, spot_size)
    inc = config.pixel_increment
    positions = [
        (px, py)
        for py in range(y_lo, y_hi + 1, inc)
        for px in range(x_lo, x_hi + 1, inc)
        if not _hits_exclusion((px, py), spot_size, config.exclusions)
    ]
    if not positions:
        raise SearchSpaceError("no-admissible-placements", "no admissible placements")
    return positions


def placement_count(position_count: int, spot_count: int) -> int:
    """Closed form for the number of k-multisets over P positions."""
    return math.comb(position_count + spot_count - 1, spot_count)


def enumerate_placements(
    crop_size: tuple[int, int],
    spot_size: tuple[int, int],
    config: SearchConfig,
):
    """Yield every candidate placement in canonical order.

    Single spots scan the lattice row-major; multiple identical spots scan
    all non-decreasing multisets of lattice positions, which skips the k!
    permutations a naive nested loop would re-evaluate.
    """
    positions = admissible_positions(crop_size, spot_size, config)
    for combo in combinations_with_replacement(positions, config.spot_count):
        yield Placement(tuple(combo))


def _apply_spots(crop_img: ImageRaster, spot: SpotModel, placement: Placement) -> ImageRaster:
    out = crop_img
    for center in placement.centers:
        out = composite(out, spot.raster, center)
    return out


def _evaluate(crop_img, spot, oracle, placement, index) -> float:
    try:
        perturbed = _apply_spots(crop_img, spot, placement)
        return detection_score(query(oracle, perturbed, placement.centers))
    except OracleError as exc:
        raise SearchOracleFailure(index, exc) from exc


def grid_search(
    crop_img: ImageRaster,
    spot: SpotModel,
    oracle: OracleHandle,
    config: SearchConfig,
    workers: int = 1,
) -> SearchOutcome:
    """Exhaustively score every enumerated placement, returning the minimum.

    Ties break toward the smallest enumeration index, so the outcome does not
    depend on evaluation order; with a parallel-safe oracle the evaluations
    may fan out across ``workers`` threads and still reduce identically.
    """
    start = time.perf_counter()
    placements = enumerate_placements(crop_img.size, spot.size, config)
    best_conf, best_idx, best_placement = math.inf, -1, None
    trace = [] if config.keep_trace else None
    iterations = 0

    def score(indexed) -> tuple[int, Placement, float]:
        index, placement = indexed
        return index, placement, _evaluate(crop_img, spot, oracle, placement, index)

    if workers > 1 and oracle.parallel_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(score, enumerate(placements), chunksize=32)
            for index, placement, conf in results:
                iterations += 1
                if trace is not None:
                    trace.append((index, placement, conf))
                if conf < best_conf:
                    best_conf, best_idx, best_placement = conf, index, placement
    else:
        for index, placement in enumerate(placements):
            _, _, conf = score((index, placement))
            iterations += 1
            if trace is not None:
                trace.append((index, placement, conf))
            if conf < best_conf:
                best_conf, best_idx, best_placement = conf, index, placement

    return SearchOutcome(
        best_placement=best_placement,
        best_confidence=best_conf,
        iterations=iterations,
        lowest_confidence_index=best_idx,
        elapsed=time.perf_counter() - start,
        trace=tuple(trace) if trace is not None else None,
    )


class _AdmissibleProjector:
    """Snap integer centers to the nearest center whose footprint is allowed."""

    def __init__(self, crop_size, spot_size, exclusions):
        self.spot_size = spot_size
        self.exclusions = exclusions
        x_lo, x_hi, y_lo, y_hi = _lattice_bounds(crop_size, spot_size)
        self.bounds = (x_lo, x_hi, y_lo, y_hi)
        self._points = None  # built lazily; only needed when exclusions bite

    def _admissible_points(self) -> np.ndarray:
        if self._points is None:
            x_lo, x_hi, y_lo, y_hi = self.bounds
            pts = [
                (px, py)
                for py in range(y_lo, y_hi + 1)
                for px in range(x_lo, x_hi + 1)
                if not _hits_exclusion((px, py), self.spot_size, self.exclusions)
            ]
            if not pts:
                raise SearchSpaceError(
                    "no-admissible-placements", "no admissible placements"
                )
            self._points = np.asarray(pts, dtype=np.float64)
        return self._points

    def project(self, center: tuple[int, int]) -> tuple[int, int]:
        x_lo, x_hi, y_lo, y_hi = self.bounds
        px = min(max(center[0], x_lo), x_hi)
        py = min(max(center[1], y_lo), y_hi)
        if not _hits_exclusion((px, py), self.spot_size, self.exclusions):
            return (px, py)
        pts = self._admissible_points()
        d2 = (pts[:, 0] - px) ** 2 + (pts[:, 1] - py) ** 2
        nearest = pts[int(np.argmin(d2))]  # argmin takes the first: row-major tie-break
        return (int(nearest[0]), int(nearest[1]))


def de_search(
    crop_img: ImageRaster,
    spot: SpotModel,
    oracle: OracleHandle,
    config: SearchConfig,
) -> SearchOutcome:
    """rand/1/bin differential evolution over continuous spot coordinates.

    Fitness is the negated oracle confidence; a child replaces its parent
    only when strictly fitter. Coordinates are clamped to the admissible
    rectangle and, when a footprint lands on an exclusion, projected to the
    nearest admissible integer center. Oracle evaluations total NP*(G+1).
    """
    start = time.perf_counter()
    de = config.de_params
    projector = _AdmissibleProjector(crop_img.size, spot.size, config.exclusions)
    x_lo, x_hi, y_lo, y_hi = projector.bounds
    if config.exclusions:
        projector._admissible_points()  # fail fast when nothing is admissible
    rng = np.random.default_rng(de.seed)
    k = config.spot_count
    dims = 2 * k
    lows = np.tile([x_lo, y_lo], k).astype(np.float64)
    highs = np.tile([x_hi, y_hi], k).astype(np.float64)

    def phenotype(vector: np.ndarray) -> Placement:
        ints = round_half_up(vector).astype(int)
        centers = tuple(
            projector.project((int(ints[2 * j]), int(ints[2 * j + 1])))
            for j in range(k)
        )
        return Placement(centers)

    population = rng.uniform(lows, highs, size=(de.population, dims))
    fitness = np.empty(de.population)
    phenos: list[Placement] = [None] * de.population
    trace = [] if config.keep_trace else None
    best_conf, best_idx, best_placement = math.inf, -1, None
    eval_index = 0

    def run_eval(vector: np.ndarray) -> tuple[Placement, float]:
        nonlocal eval_index, best_conf, best_idx, best_placement
        placement = phenotype(vector)
        conf = _evaluate(crop_img, spot, oracle, placement, eval_index)
        if trace is not None:
            trace.append((eval_index, placement, conf))
        if conf < best_conf:
            best_conf, best_idx, best_placement = conf, eval_index, placement
        eval_index += 1
        return placement, conf

    for i in range(de.population):
        phenos[i], fitness[i] = run_eval(population[i])

    for _generation in range(de.generations):
        for i in range(de.population):
            picks = rng.permutation(de.population - 1)[:3]
            r0, r1, r2 = (p + (p >= i) for p in picks)
            mutant = population[r0] + de.weight * (population[r1] - population[r2])
            cross = rng.random(dims) < de.crossover
            cross[rng.integers(dims)] = True
            trial = np.clip(np.where(cross, mutant, population[i]), lows, highs)
            pheno, conf = run_eval(trial)
            if conf < fitness[i]:
                population[i] = trial
                fitness[i] = conf
                phenos[i] = pheno

    return SearchOutcome(
        best_placement=best_placement,
        best_confidence=best_conf,
        iterations=de.population * (de.generations + 1),
        lowest_confidence_index=best_idx,
        elapsed=time.perf_counter() - start,
        trace=tuple(trace) if trace is not None else None,
    )


def run_search(crop_img, spot, oracle, config, workers: int = 1) -> SearchOutcome:
    if config.strategy == "de":
        return de_search(crop_img, spot, oracle, config)
    return grid_search(crop_img, spot, oracle, config, workers)


def eye_exclusion_preset(crop_size: tuple[int, int]) -> list[FaceBox]:
    """A single keep-out band over the eyes, in crop pixels.

    Placing a laser recommendation over or around the eyes is unsafe to act
    on, so searches can exclude the band 20%-45% of the crop height and
    10%-90% of its width. Crops too small to hold a non-degenerate band get
    no exclusion at all.
    """
    w, h = crop_size
    x1 = int(round_half_up(0.10 * w))
    x2 = int(round_half_up(0.90 * w))
    y1 = int(round_half_up(0.20 * h))
    y2 = int(round_half_up(0.45 * h))
    if x1 >= x2 or y1 >= y2:
        return []
    return [FaceBox(x1, y1, x2, y2)]
