"""Opaque confidence-scoring backends behind one query interface.

A handle is either an external process/service speaking the wire protocol
(see :mod:`lpo.protocol`) or an in-process synthetic oracle used for tests
and experiments. The attack code only ever sees ``query`` and the returned
detections; that is the whole black-box premise.

Synthetic oracles score a *placement* rather than pixels: the search passes
the candidate spot centers alongside the image through an in-process side
channel, which keeps test oracles exact without any image analysis.
External oracles receive encoded pixels only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .raster import FaceBox, ImageRaster


class OracleError(Exception):
    """Base class for oracle failures."""


class NoFaceError(OracleError):
    """An oracle returned zero detections where a face was required."""

    def __init__(self, view: str):
        super().__init__(f"no face detected in {view}")
        self.view = view


@dataclass(frozen=True)
class Detection:
    """One scored face: bounding box, confidence, optional identity label."""

    box: FaceBox
    confidence: float
    label: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise OracleError(f"confidence {self.confidence} outside [0,1]")


def best_face(detections: list[Detection], view: str = "image") -> FaceBox:
    """The highest-confidence detection; ties go to the smallest (y1, x1).

    The tie-break makes the choice independent of list order, so results do
    not depend on how a backend happens to sort its output.
    """
    if not detections:
        raise NoFaceError(view)
    chosen = min(detections, key=lambda d: (-d.confidence, d.box.y1, d.box.x1))
    return FaceBox(
        chosen.box.x1, chosen.box.y1, chosen.box.x2, chosen.box.y2, chosen.confidence
    )


def detection_score(detections: list[Detection]) -> float:
    """Scalar confidence of a response: best detection, or 0 when none."""
    return max((d.confidence for d in detections), default=0.0)


# --- synthetic oracle specs -------------------------------------------------

@dataclass(frozen=True)
class ConstantSpec:
    """Always reports one full-image detection at a fixed confidence."""

    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise OracleError(f"constant confidence {self.confidence} outside [0,1]")

    def evaluate(self, image: ImageRaster, placement) -> float:
        return self.confidence


@dataclass(frozen=True)
class PlantedMinSpec:
    """Confidence dips linearly to ``floor`` at a planted center.

    With a spot centered distance d from ``center``, confidence is
    floor + (baseline - floor) * min(1, d / radius); queries without
    placement information score the baseline.
    """

    center: tuple[float, float]
    radius: float
    floor: float
    baseline: float = 0.99

    def __post_init__(self):
        if not (0.0 <= self.floor <= self.baseline <= 1.0):
            raise OracleError("need 0 <= floor <= baseline <= 1")
        if self.radius <= 0:
            raise OracleError(f"radius {self.radius} must be positive")

    def evaluate(self, image: ImageRaster, placement) -> float:
        if not placement:
            return self.baseline
        d = min(math.dist(c, self.center) for c in placement)
        return self.floor + (self.baseline - self.floor) * min(1.0, d / self.radius)


@dataclass(frozen=True)
class GaussianWellSpec:
    """Confidence = baseline minus gaussian wells, clamped into [0,1].

    ``components`` is a list of (cx, cy, amplitude, sigma). The best spot
    center (deepest total well) determines the score.
    """

    components: tuple[tuple[float, float, float, float], ...]
    baseline: float = 1.0

    def __post_init__(self):
        if not self.components:
            raise OracleError("need at least one gaussian component")
        if not 0.0 <= self.baseline <= 1.0:
            raise OracleError(f"baseline {self.baseline} outside [0,1]")
        for cx, cy, amp, sigma in self.components:
            if amp < 0 or sigma <= 0:
                raise OracleError("gaussian components need amp >= 0, sigma > 0")

    def field_at(self, point: tuple[float, float]) -> float:
        depth = sum(
            amp * math.exp(-((point[0] - cx) ** 2 + (point[1] - cy) ** 2) / (2 * sigma**2))
            for cx, cy, amp, sigma in self.components
        )
        return min(1.0, max(0.0, self.baseline - depth))

    def evaluate(self, image: ImageRaster, placement) -> float:
        if not placement:
            return self.baseline
        return min(self.field_at(c) for c in placement)


SyntheticSpec = ConstantSpec | PlantedMinSpec | GaussianWellSpec


@dataclass
class OracleHandle:
    """One scoring backend: kind, endpoint, and a declared concurrency contract.

    Callers must serialize queries when ``parallel_safe`` is false.
    """

    kind: str  # "subprocess" | "http" | "synthetic"
    endpoint: str
    parallel_safe: bool
    backend: object = field(repr=False, default=None)

    def __post_init__(self):
        if self.kind not in ("subprocess", "http", "synthetic"):
            raise OracleError(f"unknown oracle kind {self.kind!r}")
        if self.kind != "synthetic" and not self.endpoint:
            raise OracleError(f"{self.kind} oracle needs a non-empty endpoint")

    def close(self):
        closer = getattr(self.backend, "close", None)
        if closer is not None:
            closer()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _SyntheticBackend:
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec

    def query(self, image: ImageRaster, placement=None) -> list[Detection]:
        conf = self.spec.evaluate(image, placement)
        box = FaceBox(0, 0, image.width, image.height, conf)
        return [Detection(box, conf)]


def make_synthetic(spec: SyntheticSpec) -> OracleHandle:
    """Wrap a synthetic spec as a fully deterministic, parallel-safe handle."""
    return OracleHandle(
        kind="synthetic",
        endpoint=format_synthetic_spec(spec),
        parallel_safe=True,
        backend=_SyntheticBackend(spec),
    )


def query(oracle: OracleHandle, image: ImageRaster, placement=None) -> list[Detection]:
    """Score one image. ``placement`` reaches synthetic backends only."""
    if oracle.kind == "synthetic":
        return oracle.backend.query(image, placement)
    return oracle.backend.query(image)


# --- spec-string grammar (CLI surface) --------------------------------------

def format_synthetic_spec(spec: SyntheticSpec) -> str:
    if isinstance(spec, ConstantSpec):
        return f"constant:{spec.confidence:g}"
    if isinstance(spec, PlantedMinSpec):
        return (
            f"planted:{spec.center[0]:g},{spec.center[1]:g},"
            f"{spec.radius:g},{spec.floor:g},{spec.baseline:g}"
        )
    parts = ";".join(f"{cx:g},{cy:g},{amp:g},{sigma:g}" for cx, cy, amp, sigma in spec.components)
    return f"gaussians:{parts}@{spec.baseline:g}"


def parse_synthetic_spec(text: str) -> SyntheticSpec:
    """Parse the ``synthetic:`` oracle grammar.

    Forms: ``constant:C`` | ``planted:PX,PY,R,FLOOR[,BASELINE]``
    | ``gaussians:CX,CY,AMP,SIGMA[;...][@BASELINE]``.
    """
    kind, _, rest = text.partition(":")
    try:
        if kind == "constant":
            return ConstantSpec(float(rest))
        if kind == "planted":
            nums = [float(v) for v in rest.split(",")]
            if len(nums) == 4:
                return PlantedMinSpec((nums[0], nums[1]), nums[2], nums[3])
            if len(nums) == 5:
                return PlantedMinSpec((nums[0], nums[1]), nums[2], nums[3], nums[4])
            raise ValueError("expected 4 or 5 numbers")
        if kind == "gaussians":
            body, _, base = rest.partition("@")
            comps = tuple(
                tuple(float(v) for v in chunk.split(","))
                for chunk in body.split(";")
                if chunk
            )
            if any(len(c) != 4 for c in comps):
                raise ValueError("each component needs cx,cy,amp,sigma")
            baseline = float(base) if base else 1.0
            return GaussianWellSpec(comps, baseline)
    except (ValueError, OracleError) as exc:
        raise OracleError(f"bad synthetic oracle spec {text!r}: {exc}") from exc
    raise OracleError(f"unknown synthetic oracle kind {kind!r}")
