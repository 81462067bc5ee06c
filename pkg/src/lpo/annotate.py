"""Burn bounding boxes and confidence text into rasters.

Rendering uses a fixed embedded 5x7 bitmap font so annotated output images
are bit-identical across platforms; no font files, no text stack.
"""

from __future__ import annotations

import numpy as np

from .raster import FaceBox, ImageRaster

# 5x7 glyphs, one int per row, low 5 bits used (MSB = leftmost column).
_GLYPHS = {
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    "%": (0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03),
    " ": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00),
}

GLYPH_W, GLYPH_H = 5, 7
_BOX_COLOUR = (0, 220, 40, 255)
_TEXT_COLOUR = (255, 255, 255, 255)
_TEXT_BG = (0, 0, 0, 255)


def _paint(px: np.ndarray, x0: int, y0: int, x1: int, y1: int, colour) -> None:
    h, w = px.shape[:2]
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x0 < x1 and y0 < y1:
        px[y0:y1, x0:x1] = colour


def draw_box(px: np.ndarray, box: FaceBox, thickness: int = 2) -> None:
    t = thickness
    _paint(px, box.x1, box.y1, box.x2, box.y1 + t, _BOX_COLOUR)
    _paint(px, box.x1, box.y2 - t, box.x2, box.y2, _BOX_COLOUR)
    _paint(px, box.x1, box.y1, box.x1 + t, box.y2, _BOX_COLOUR)
    _paint(px, box.x2 - t, box.y1, box.x2, box.y2, _BOX_COLOUR)


def draw_text(px: np.ndarray, text: str, origin: tuple[int, int], scale: int = 2) -> None:
    x, y = origin
    pad = scale
    width = len(text) * (GLYPH_W + 1) * scale
    _paint(px, x - pad, y - pad, x + width + pad, y + GLYPH_H * scale + pad, _TEXT_BG)
    for ch in text:
        rows = _GLYPHS.get(ch, _GLYPHS[" "])
        for gy, bits in enumerate(rows):
            for gx in range(GLYPH_W):
                if bits & (1 << (GLYPH_W - 1 - gx)):
                    _paint(
                        px,
                        x + gx * scale,
                        y + gy * scale,
                        x + (gx + 1) * scale,
                        y + (gy + 1) * scale,
                        _TEXT_COLOUR,
                    )
        x += (GLYPH_W + 1) * scale


def annotate_detection(image: ImageRaster, box: FaceBox | None, confidence: float) -> ImageRaster:
    """Copy of ``image`` with the box outlined and 'NN.NN%' burned in."""
    px = image.pixels.copy()
    text = f"{confidence * 100:.2f}%"
    if box is not None:
        draw_box(px, box)
        ty = box.y1 - GLYPH_H * 2 - 6
        draw_text(px, text, (box.x1 + 2, ty if ty >= 0 else box.y1 + 4))
    else:
        draw_text(px, text, (4, 4))
    return ImageRaster(px)
