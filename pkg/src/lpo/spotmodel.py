"""Synthetic light-spot perturbations: parametric rendering, file loading, rescaling.

A spot stands in for a physical light dot on the face and carries the three
attributes that matter for realism: colour, shape and opacity. Spots remember
the face width they were authored against so they can be rescaled to each
newly detected face.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .raster import FaceBox, ImageRaster, RasterError, _resize_bilinear, round_half_up


class SpotError(ValueError):
    """Invalid spot parameters or an unusable spot file."""


@dataclass(frozen=True)
class SpotParams:
    """Recipe for a rendered elliptical spot.

    ``falloff`` is the fraction of the radius over which alpha fades from
    full opacity to zero; 0 gives a hard-edged ellipse.
    """

    colour: tuple[int, int, int]
    opacity: float
    size: tuple[int, int]
    falloff: float = 0.35

    def __post_init__(self):
        if not all(0 <= c <= 255 for c in self.colour):
            raise SpotError(f"colour {self.colour} outside 0..255")
        if not 0.0 <= self.opacity <= 1.0:
            raise SpotError(f"opacity {self.opacity} outside [0,1]")
        if not 0.0 <= self.falloff <= 1.0:
            raise SpotError(f"falloff {self.falloff} outside [0,1]")
        if self.size[0] < 1 or self.size[1] < 1:
            raise SpotError(f"size {self.size} must be at least 1x1")


@dataclass(frozen=True)
class SpotModel:
    """A rasterized spot plus the face width it was composed against."""

    raster: ImageRaster
    reference_face_width: int
    params: SpotParams | None = None

    def __post_init__(self):
        if self.reference_face_width < 1:
            raise SpotError(
                f"reference face width {self.reference_face_width} must be positive"
            )
        if not np.any(self.raster.pixels[:, :, 3] > 0):
            raise SpotError("spot has no visible pixels")

    @property
    def size(self) -> tuple[int, int]:
        return self.raster.size


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def render_spot(params: SpotParams, reference_face_width: int = 1_000) -> SpotModel:
    """Rasterize an elliptical spot from its parameters.

    Alpha at each pixel is 255 * opacity * s(d) where d is the normalized
    radial distance from the ellipse center and s is a smoothstep that is 1
    inside d <= 1-falloff and 0 outside d >= 1. Colour channels are constant.
    """
    w, h = params.size
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    d = np.sqrt(((xs - cx) / (w / 2.0)) ** 2 + ((ys - cy) / (h / 2.0)) ** 2)
    if params.falloff == 0.0:
        factor = (d <= 1.0).astype(np.float64)
    else:
        t = np.clip((1.0 - d) / params.falloff, 0.0, 1.0)
        factor = _smoothstep(t)
    alpha = round_half_up(255.0 * params.opacity * factor).astype(np.uint8)
    px = np.empty((h, w, 4), dtype=np.uint8)
    px[:, :, 0], px[:, :, 1], px[:, :, 2] = params.colour
    px[:, :, 3] = alpha
    return SpotModel(ImageRaster(px), reference_face_width, params)


def load_spot(path, reference_face_width: int | None = None) -> SpotModel:
    """Load a spot from a PNG that carries its own alpha channel.

    The reference face width comes either from the argument or from a
    ``<name>.meta`` sidecar next to the PNG (``reference_face_width = N``).
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise SpotError(f"{path}: spot files must be PNG, got {im.format!r}")
            if im.mode not in ("RGBA", "LA", "PA"):
                raise SpotError(f"{path}: spot PNG is missing an alpha channel")
            pixels = np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()
    except FileNotFoundError:
        raise SpotError(f"{path}: file not found") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise SpotError(f"{path}: cannot decode ({exc})") from exc
    if reference_face_width is None:
        reference_face_width = _read_sidecar_width(path)
    return SpotModel(ImageRaster(pixels), reference_face_width, params=None)


def _read_sidecar_width(png_path: Path) -> int:
    meta = png_path.with_suffix(".meta")
    if not meta.exists():
        raise SpotError(
            f"{png_path}: no reference face width given and no sidecar {meta.name}"
        )
    for line in meta.read_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "reference_face_width":
            try:
                return int(value.strip())
            except ValueError:
                raise SpotError(f"{meta}: bad reference_face_width {value.strip()!r}") from None
    raise SpotError(f"{meta}: missing reference_face_width key")


def rescale_spot(spot: SpotModel, face: FaceBox) -> SpotModel:
    """Rescale a spot to a newly detected face.

    The scale factor is face width / reference face width; both colour and
    alpha are resampled bilinearly and the reference width is updated so a
    second rescale to the same face is the identity.
    """
    face_width = face.width
    s = face_width / spot.reference_face_width
    w, h = spot.size
    out_w = max(1, int(round_half_up(s * w)))
    out_h = max(1, int(round_half_up(s * h)))
    if (out_w, out_h) == (w, h):
        return replace(spot, reference_face_width=face_width)
    resized = ImageRaster(_resize_bilinear(spot.raster.pixels, out_w, out_h))
    return SpotModel(resized, face_width, params=None)


def sample_colour(image: ImageRaster, region: FaceBox) -> tuple[int, int, int]:
    """Channel-wise mean colour over a region, rounded half-up.

    This is how a spot's colour gets lifted from a sample photo of the real
    light on the face.
    """
    try:
        b = region.clamped(image.width, image.height)
    except RasterError as exc:
        raise SpotError(str(exc)) from exc
    block = image.pixels[b.y1 : b.y2, b.x1 : b.x2, :3].astype(np.float64)
    means = round_half_up(block.mean(axis=(0, 1)))
    return (int(means[0]), int(means[1]), int(means[2]))
