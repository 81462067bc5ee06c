"""RGBA raster images: decode/encode, face cropping, resampling, compositing.

Everything is 8-bit RGBA end to end. All fractional results are rounded
half-up so repeated runs are bit-identical; golden image tests depend on
this. Rasters are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError


class RasterError(ValueError):
    """Bad image file, bad geometry, or an unsatisfiable raster request."""


def round_half_up(values: np.ndarray | float) -> np.ndarray | float:
    """Round to nearest integer with .5 going up (never banker's rounding)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


@dataclass(frozen=True, eq=False)
class ImageRaster:
    """A width x height grid of RGBA samples, stored row-major as uint8.

    ``pixels`` has shape (height, width, 4) and is locked read-only; use
    :meth:`from_pixels` when handing in an array you still hold a writable
    reference to.
    """

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 3 or px.shape[2] != 4:
            raise RasterError("pixels must be an (H, W, 4) array")
        if px.dtype != np.uint8:
            raise RasterError(f"pixels must be uint8, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise RasterError("raster must have at least one pixel")
        px.setflags(write=False)

    @classmethod
    def from_pixels(cls, pixels: np.ndarray) -> "ImageRaster":
        return cls(np.ascontiguousarray(pixels, dtype=np.uint8).copy())

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageRaster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    def __hash__(self):
        return hash((self.width, self.height, self.pixels.tobytes()))


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned box [x1, y1, x2, y2] (half-open) with a detection confidence."""

    x1: int
    y1: int
    x2: int
    y2: int
    confidence: float = 1.0

    def __post_init__(self):
        if not (0 <= self.x1 < self.x2 and 0 <= self.y1 < self.y2):
            raise RasterError(
                f"degenerate box [{self.x1},{self.y1},{self.x2},{self.y2}]"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise RasterError(f"confidence {self.confidence} outside [0,1]")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def clamped(self, width: int, height: int) -> "FaceBox":
        """Clamp to an image of the given size; detectors may overshoot slightly."""
        x1 = min(max(self.x1, 0), width)
        y1 = min(max(self.y1, 0), height)
        x2 = min(max(self.x2, 0), width)
        y2 = min(max(self.y2, 0), height)
        if x1 >= x2 or y1 >= y2:
            raise RasterError(
                f"box [{self.x1},{self.y1},{self.x2},{self.y2}] lies outside a "
                f"{width}x{height} image"
            )
        return FaceBox(x1, y1, x2, y2, self.confidence)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]


def load_image(path) -> ImageRaster:
    """Decode a PNG or JPEG file to RGBA (JPEG gets alpha = 255)."""
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise RasterError(f"{path}: unsupported format {im.format!r}")
            return ImageRaster(np.asarray(im.convert("RGBA"), dtype=np.uint8).copy())
    except FileNotFoundError:
        raise RasterError(f"{path}: file not found") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise RasterError(f"{path}: cannot decode image ({exc})") from exc


def decode_image(data: bytes) -> ImageRaster:
    """Decode in-memory PNG/JPEG bytes (wire-protocol payloads)."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return ImageRaster(np.asarray(im.convert("RGBA"), dtype=np.uint8).copy())
    except (UnidentifiedImageError, OSError) as exc:
        raise RasterError(f"cannot decode image bytes ({exc})") from exc


def encode_png(image: ImageRaster) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: ImageRaster, path) -> None:
    Image.fromarray(image.pixels, mode="RGBA").save(path, format="PNG")


def crop(image: ImageRaster, box: FaceBox) -> ImageRaster:
    """Cut the (clamped) box out of the image; pixel (i,j) maps to (x1+i, y1+j)."""
    b = box.clamped(image.width, image.height)
    return ImageRaster(image.pixels[b.y1 : b.y2, b.x1 : b.x2].copy())


def _resize_bilinear(px: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) uint8 array, pixel-center aligned."""
    src_h, src_w = px.shape[:2]
    xs = np.clip((np.arange(out_w) + 0.5) * (src_w / out_w) - 0.5, 0, src_w - 1)
    ys = np.clip((np.arange(out_h) + 0.5) * (src_h / out_h) - 0.5, 0, src_h - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = (xs - x0)[np.newaxis, :, np.newaxis]
    fy = (ys - y0)[:, np.newaxis, np.newaxis]
    p = px.astype(np.float64)
    top = p[y0][:, x0] * (1 - fx) + p[y0][:, x1] * fx
    bot = p[y1][:, x0] * (1 - fx) + p[y1][:, x1] * fx
    return round_half_up(top * (1 - fy) + bot * fy).astype(np.uint8)


def normalize_face(crop_img: ImageRaster, target_width: int) -> tuple[ImageRaster, float]:
    """Resize a face crop to a common width, preserving aspect ratio.

    Returns the resized raster and the applied scale factor
    target_width / input width. Height is rounded to the nearest pixel
    (minimum 1); resampling is bilinear.
    """
    if target_width < 1:
        raise RasterError(f"target width {target_width} must be positive")
    scale = target_width / crop_img.width
    out_h = max(1, int(round_half_up(crop_img.height * scale)))
    if (target_width, out_h) == (crop_img.width, crop_img.height):
        return crop_img, scale
    return ImageRaster(_resize_bilinear(crop_img.pixels, target_width, out_h)), scale


def composite(image: ImageRaster, spot: ImageRaster, center: tuple[int, int]) -> ImageRaster:
    """Source-over blend of ``spot`` onto ``image``, centered at ``center``.

    Colour channels follow out = spot*a + base*(1-a) with a = spot alpha/255;
    alpha channels combine source-over (a_out = a_s + a_b*(1-a_s)). The spot
    is clipped at the image edges; the input rasters are never mutated.
    """
    px, py = int(center[0]), int(center[1])
    sh, sw = spot.pixels.shape[:2]
    x0 = px - sw // 2
    y0 = py - sh // 2
    bx0, by0 = max(0, x0), max(0, y0)
    bx1, by1 = min(image.width, x0 + sw), min(image.height, y0 + sh)
    out = image.pixels.copy()
    if bx0 < bx1 and by0 < by1:
        sub = spot.pixels[by0 - y0 : by1 - y0, bx0 - x0 : bx1 - x0].astype(np.float64)
        base = out[by0:by1, bx0:bx1].astype(np.float64)
        a = sub[:, :, 3:4] / 255.0
        rgb = round_half_up(sub[:, :, :3] * a + base[:, :, :3] * (1.0 - a))
        alpha = round_half_up(sub[:, :, 3:4] + base[:, :, 3:4] * (1.0 - a))
        out[by0:by1, bx0:bx1] = np.concatenate([rgb, alpha], axis=2).astype(np.uint8)
    return ImageRaster(out)


def _box_reduce_axis(values: np.ndarray, out_n: int) -> np.ndarray:
    """Exact area-average reduction along axis 0 (fractional cell coverage)."""
    src_n = values.shape[0]
    cum = np.concatenate(
        [np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)], axis=0
    )
    edges = np.arange(out_n + 1) * (src_n / out_n)
    idx = np.minimum(np.floor(edges).astype(np.intp), src_n)
    frac = edges - idx
    # integral of the step function up to a fractional position
    partial = np.where(
        (idx < src_n)[(...,) + (np.newaxis,) * (values.ndim - 1)],
        values[np.minimum(idx, src_n - 1)],
        0.0,
    )
    integrals = cum[idx] + frac[(...,) + (np.newaxis,) * (values.ndim - 1)] * partial
    widths = np.diff(edges)[(...,) + (np.newaxis,) * (values.ndim - 1)]
    return np.diff(integrals, axis=0) / widths


def downscale(image: ImageRaster, target: tuple[int, int]) -> ImageRaster:
    """Box-filter downsample to exactly target (w, h). Upscaling is rejected."""
    tw, th = int(target[0]), int(target[1])
    if tw < 1 or th < 1:
        raise RasterError(f"target {tw}x{th} must be positive")
    if tw > image.width or th > image.height:
        raise RasterError(
            f"downscale target {tw}x{th} exceeds source {image.width}x{image.height}"
        )
    if (tw, th) == (image.width, image.height):
        return image
    vals = image.pixels.astype(np.float64)
    vals = _box_reduce_axis(vals, th)
    vals = np.moveaxis(_box_reduce_axis(np.moveaxis(vals, 1, 0), tw), 0, 1)
    return ImageRaster(round_half_up(vals).astype(np.uint8))
