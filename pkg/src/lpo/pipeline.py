"""Two-phase attack campaign over front/left/right views.

Phase 1 scores each view on the recognition and detection oracles, runs the
placement search against the detection oracle, and writes annotated
initial/recommendation images. The operator then physically adjusts the
light to match the recommendation and supplies new photos; phase 2 re-scores
those and persists the complete campaign record as one JSON document.

Partial outputs are removed when a phase aborts, so an output directory
never holds a half-written campaign.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import annotate
from .oracle import Detection, OracleHandle, best_face, query
from .raster import FaceBox, ImageRaster, composite, crop, downscale, load_image, save_png
from .search import SearchConfig, SearchOutcome, eye_exclusion_preset, run_search
from .spotmodel import SpotModel, rescale_spot

VIEWS = ("front", "left", "right")
RECORD_NAME = "campaign.json"
RECORD_VERSION = 1

STAGES_PHASE1 = ("Initial_FD", "Initial_FR", "LPO")
STAGES_PHASE2 = ("Final_FD", "Final_FR")


class CampaignError(Exception):
    """Campaign-level orchestration failure (bad inputs, ordering, IO)."""


def output_name(view: str, stage: str) -> str:
    """Output filename for a (view, stage) pair; pure and enumerable."""
    return f"{view}_{stage}.png"


def expected_outputs(phase: int) -> list[str]:
    stages = STAGES_PHASE1 + (STAGES_PHASE2 if phase >= 2 else ())
    return [output_name(view, stage) for view in VIEWS for stage in stages]


@dataclass
class ViewInput:
    name: str
    path: str
    image: ImageRaster


@dataclass
class ViewSet:
    """The three campaign views plus per-view spot counts.

    Defaults to one spot per view (single-beam laser attack); the legacy
    three-LED front rig is ``spot_counts={"front": 3, ...}``.
    """

    front: ViewInput
    left: ViewInput
    right: ViewInput
    spot_counts: dict[str, int] = field(
        default_factory=lambda: {"front": 1, "left": 1, "right": 1}
    )

    def __post_init__(self):
        for view in VIEWS:
            if self.spot_counts.get(view, 1) < 1:
                raise CampaignError(f"spot count for {view} must be >= 1")

    def __iter__(self):
        return iter((self.front, self.left, self.right))

    @classmethod
    def load(cls, paths: dict[str, str], downscale_to=None, spot_counts=None) -> "ViewSet":
        views = {}
        for view in VIEWS:
            if view not in paths:
                raise CampaignError(f"missing {view} image path")
            image = load_image(paths[view])
            if downscale_to is not None:
                image = downscale(image, downscale_to)
            views[view] = ViewInput(view, str(paths[view]), image)
        return cls(views["front"], views["left"], views["right"],
                   spot_counts or {v: 1 for v in VIEWS})


@dataclass
class CampaignConfig:
    """Everything about a campaign that is not an input image."""

    pixel_increment: int
    strategy: str = "grid"
    exclude_eyes: bool = False
    de_seed: int = 0
    keep_trace: bool = False
    workers: int = 1
    downscale_to: tuple[int, int] | None = None
    fd_spec: str = ""
    fr_spec: str = ""

    def search_config(self, spot_count: int, crop_size: tuple[int, int]) -> SearchConfig:
        from .search import DEParams

        exclusions = tuple(eye_exclusion_preset(crop_size)) if self.exclude_eyes else ()
        return SearchConfig(
            pixel_increment=self.pixel_increment,
            spot_count=spot_count,
            strategy=self.strategy,
            exclusions=exclusions,
            de_params=DEParams(seed=self.de_seed),
            keep_trace=self.keep_trace,
        )

    def as_dict(self) -> dict:
        return {
            "pixel_increment": self.pixel_increment,
            "strategy": self.strategy,
            "exclude_eyes": self.exclude_eyes,
            "de_seed": self.de_seed,
            "downscale": list(self.downscale_to) if self.downscale_to else None,
            "fd_oracle": self.fd_spec,
            "fr_oracle": self.fr_spec,
        }


def _score_dict(detections: list[Detection]) -> dict:
    """Record entry for a scoring query; no detection scores as zero."""
    if not detections:
        return {"confidence": 0.0, "box": None, "label": None}
    top = max(detections, key=lambda d: (d.confidence, -d.box.y1, -d.box.x1))
    return {
        "confidence": top.confidence,
        "box": top.box.as_list(),
        "label": top.label,
    }


@dataclass
class CampaignResult:
    phase: int
    config: dict
    spot_counts: dict[str, int]
    views: dict[str, dict]
    outputs: dict[str, str]
    timing: dict

    def to_json(self) -> str:
        doc = {
            "record_version": RECORD_VERSION,
            "phase": self.phase,
            "config": self.config,
            "spot_counts": self.spot_counts,
            "views": self.views,
            "outputs": self.outputs,
            "timing": self.timing,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CampaignResult":
        doc = json.loads(text)
        return cls(
            phase=doc["phase"],
            config=doc["config"],
            spot_counts=doc["spot_counts"],
            views=doc["views"],
            outputs=doc["outputs"],
            timing=doc["timing"],
        )


class _OutputTracker:
    """Writes artifacts and can sweep them away again if the phase aborts."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def save_image(self, image: ImageRaster, name: str) -> str:
        path = self.out_dir / name
        save_png(image, path)
        self.written.append(path)
        return name

    def save_text(self, text: str, name: str) -> str:
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)
        return name

    def rollback(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass
        self.written.clear()


def phase1_recommend(
    views: ViewSet,
    fd: OracleHandle,
    fr: OracleHandle,
    spot: SpotModel,
    campaign: CampaignConfig,
    out_dir,
    rescale_to_face: bool = True,
) -> CampaignResult:
    """Initial scoring plus placement recommendation for all three views.

    Writes ``<view>_Initial_FD``, ``<view>_Initial_FR`` and ``<view>_LPO``
    images and returns the partial campaign record (persisted to disk so a
    later phase 2 can resume).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker(out_dir)
    started = datetime.now(timezone.utc).isoformat()
    view_records: dict[str, dict] = {}
    outputs: dict[str, str] = {}
    lpo_seconds: dict[str, float] = {}

    try:
        for view in views:
            fr_dets = query(fr, view.image)
            fr_entry = _score_dict(fr_dets)
            fr_box = FaceBox(*fr_entry["box"], fr_entry["confidence"]) if fr_entry["box"] else None
            outputs[f"{view.name}_Initial_FR"] = tracker.save_image(
                annotate.annotate_detection(view.image, fr_box, fr_entry["confidence"]),
                output_name(view.name, "Initial_FR"),
            )

            fd_dets = query(fd, view.image)
            face = best_face(fd_dets, view.name)
            face = face.clamped(view.image.width, view.image.height)
            outputs[f"{view.name}_Initial_FD"] = tracker.save_image(
                annotate.annotate_detection(view.image, face, face.confidence),
                output_name(view.name, "Initial_FD"),
            )

            face_crop = crop(view.image, face)
            scaled = rescale_spot(spot, face) if rescale_to_face else spot
            config = campaign.search_config(views.spot_counts[view.name], face_crop.size)
            outcome = run_search(face_crop, scaled, fd, config, campaign.workers)
            lpo_seconds[view.name] = outcome.elapsed

            recommendation = view.image
            for cx, cy in outcome.best_placement.centers:
                recommendation = composite(
                    recommendation, scaled.raster, (face.x1 + cx, face.y1 + cy)
                )
            annotated = annotate.annotate_detection(
                recommendation, face, outcome.best_confidence
            )
            outputs[f"{view.name}_LPO"] = tracker.save_image(
                annotated, output_name(view.name, "LPO")
            )

            view_records[view.name] = {
                "source": view.path,
                "image_size": [view.image.width, view.image.height],
                "face_box": face.as_list(),
                "initial_fd": {"confidence": face.confidence,
                               "box": face.as_list(), "label": None},
                "initial_fr": fr_entry,
                "spot_size": list(scaled.size),
                "search": _outcome_dict(outcome, config),
            }

        result = CampaignResult(
            phase=1,
            config=campaign.as_dict(),
            spot_counts=dict(views.spot_counts),
            views=view_records,
            outputs=outputs,
            timing={"phase1_started_utc": started, "lpo_seconds": lpo_seconds},
        )
        tracker.save_text(result.to_json(), RECORD_NAME)
        return result
    except Exception:
        tracker.rollback()
        raise


def _outcome_dict(outcome: SearchOutcome, config: SearchConfig) -> dict:
    doc = {
        "strategy": config.strategy,
        "best_placement": outcome.best_placement.as_lists(),
        "best_confidence": outcome.best_confidence,
        "iterations": outcome.iterations,
        "lowest_confidence_index": outcome.lowest_confidence_index,
    }
    if outcome.trace is not None:
        doc["trace"] = [
            [index, placement.as_lists(), conf] for index, placement, conf in outcome.trace
        ]
    return doc


def await_adjusted_images(manifest=None, prompt=input) -> list[str]:
    """Collect the three adjusted photo paths, front then left then right.

    With a manifest file the three paths are read non-interactively and an
    unreadable entry aborts, naming its line. Interactively, each view is
    prompted for and re-prompted until the path is readable.
    """
    if manifest is not None:
        lines = [ln.strip() for ln in Path(manifest).read_text().splitlines() if ln.strip()]
        if len(lines) != 3:
            raise CampaignError(f"manifest must have exactly 3 paths, found {len(lines)}")
        for number, line in enumerate(lines, 1):
            if not os.access(line, os.R_OK):
                raise CampaignError(f"manifest line {number}: unreadable path {line!r}")
        return lines
    paths = []
    for view in VIEWS:
        while True:
            answer = prompt(f"Type path to Adjusted {view.upper()} Image here: ").strip()
            if answer and os.access(answer, os.R_OK):
                paths.append(answer)
                break
            print(f"Cannot read {answer!r}, try again.")
    return paths


def phase2_score(
    partial: CampaignResult,
    adjusted_paths: list[str],
    fd: OracleHandle,
    fr: OracleHandle,
    out_dir,
) -> CampaignResult:
    """Re-score the adjusted photos and persist the completed record.

    A final query with no detection records confidence zero; for the
    attacker that is the best possible outcome, not an error.
    """
    if partial is None or partial.phase < 1:
        raise CampaignError("phase 1 incomplete")
    out_dir = Path(out_dir)
    tracker = _OutputTracker(out_dir)
    downscale_to = partial.config.get("downscale")
    try:
        for view, adjusted in zip(VIEWS, adjusted_paths):
            image = load_image(adjusted)
            if downscale_to:
                image = downscale(image, tuple(downscale_to))
            record = dict(partial.views[view])
            record["adjusted_source"] = str(adjusted)
            for stage, handle in (("Final_FD", fd), ("Final_FR", fr)):
                entry = _score_dict(query(handle, image))
                box = (
                    FaceBox(*entry["box"], entry["confidence"]) if entry["box"] else None
                )
                partial.outputs[f"{view}_{stage}"] = tracker.save_image(
                    annotate.annotate_detection(image, box, entry["confidence"]),
                    output_name(view, stage),
                )
                record["final_fd" if stage == "Final_FD" else "final_fr"] = entry
            partial.views[view] = record

        timing = dict(partial.timing)
        timing["phase2_finished_utc"] = datetime.now(timezone.utc).isoformat()
        result = CampaignResult(
            phase=2,
            config=partial.config,
            spot_counts=partial.spot_counts,
            views=partial.views,
            outputs=partial.outputs,
            timing=timing,
        )
        for name in result.outputs.values():
            if not (out_dir / name).exists():
                raise CampaignError(f"output file {name} missing at persist time")
        tracker.save_text(result.to_json(), RECORD_NAME)
        return result
    except Exception:
        tracker.rollback()
        raise


def load_record(out_dir) -> CampaignResult:
    path = Path(out_dir) / RECORD_NAME
    if not path.exists():
        raise CampaignError("phase 1 incomplete")
    return CampaignResult.from_json(path.read_text())


def run_campaign(
    views: ViewSet,
    fd: OracleHandle,
    fr: OracleHandle,
    spot: SpotModel,
    campaign: CampaignConfig,
    out_dir,
    manifest=None,
    rescale_to_face: bool = True,
    prompt=input,
) -> tuple[CampaignResult, float]:
    """Both phases back to back; returns the record and total search seconds."""
    t0 = time.perf_counter()
    partial = phase1_recommend(views, fd, fr, spot, campaign, out_dir, rescale_to_face)
    print("-----")
    print(f"Images have been saved to the {out_dir} folder")
    print("-----")
    print("Please adjust the light to fit the recommended spots. "
          "Take a photo and save it somewhere.")
    print("-----")
    adjusted = await_adjusted_images(manifest, prompt)
    result = phase2_score(partial, adjusted, fd, fr, out_dir)
    return result, time.perf_counter() - t0
