"""Model backends: a cascade face detector and a template face recognizer.

The detector wraps the trained LBP frontal-face cascade that ships with
scikit-image. The cascade itself reports hits without scores, so confidence
is derived as a vote fraction: the image is scanned at several scale-factor
settings and a face's confidence is the fraction of sweeps that re-found it.
That mapping is deterministic, lands in [0,1] by construction, and degrades
smoothly as a face gets harder to see.

The recognizer is deliberately minimal: identities are enrolled from a
directory of photos, embedded as mean-removed grayscale thumbnails, and
queries score as the best correlation against any enrolled identity. It
makes no accuracy claims; it exists so the full two-oracle pipeline can run
against live models end to end.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

SCALE_FACTORS = (1.15, 1.25, 1.35, 1.45)
CLUSTER_IOU = 0.3
THUMB = 32


class ModelLoadError(Exception):
    pass


def _iou(a, b) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


class CascadeDetector:
    """FD backend: multi-scale LBP cascade sweep with vote-fraction scores."""

    kind = "fd"

    def __init__(self, model_path: str | None = None, min_size: tuple[int, int] = (24, 24)):
        try:
            import skimage.data
            from skimage.feature import Cascade
        except ImportError as exc:
            raise ModelLoadError(f"scikit-image unavailable: {exc}") from exc
        path = model_path or skimage.data.lbp_frontal_face_cascade_filename()
        if not Path(path).exists():
            raise ModelLoadError(f"cascade file not found: {path}")
        try:
            self._cascade = Cascade(path)
        except Exception as exc:
            raise ModelLoadError(f"cannot load cascade {path}: {exc}") from exc
        self.min_size = min_size

    def detections(self, pixels: np.ndarray) -> list[dict]:
        rgb = np.ascontiguousarray(pixels[:, :, :3])
        height, width = rgb.shape[:2]
        if height < self.min_size[1] or width < self.min_size[0]:
            return []
        hits = []
        for factor in SCALE_FACTORS:
            found = self._cascade.detect_multi_scale(
                img=rgb,
                scale_factor=factor,
                step_ratio=1,
                min_size=self.min_size,
                max_size=(height, width),
            )
            for d in found:
                hits.append((d["c"], d["r"], d["c"] + d["width"], d["r"] + d["height"]))

        clusters: list[list[tuple]] = []
        for box in hits:
            for cluster in clusters:
                if _iou(cluster[0], box) >= CLUSTER_IOU:
                    cluster.append(box)
                    break
            else:
                clusters.append([box])

        out = []
        for cluster in clusters:
            votes = len(cluster)
            mean = np.mean(np.asarray(cluster, dtype=np.float64), axis=0)
            x1 = max(0, int(round(mean[0])))
            y1 = max(0, int(round(mean[1])))
            x2 = min(width, int(round(mean[2])))
            y2 = min(height, int(round(mean[3])))
            if x1 >= x2 or y1 >= y2:
                continue
            out.append(
                {"box": [x1, y1, x2, y2], "confidence": votes / len(SCALE_FACTORS)}
            )
        out.sort(key=lambda d: (-d["confidence"], d["box"][1], d["box"][0]))
        return out


def _embed(pixels: np.ndarray) -> np.ndarray:
    gray = Image.fromarray(pixels[:, :, :3]).convert("L").resize(
        (THUMB, THUMB), Image.BILINEAR
    )
    vec = np.asarray(gray, dtype=np.float64).ravel()
    vec -= vec.mean()
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class TemplateRecognizer:
    """FR backend: mean-removed grayscale templates, best-correlation identity."""

    kind = "fr"

    def __init__(self, enroll_dir: str):
        root = Path(enroll_dir or "")
        if not root.is_dir():
            raise ModelLoadError(f"enrollment directory not found: {enroll_dir!r}")
        self.templates: dict[str, np.ndarray] = {}
        for identity_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            embeddings = []
            for image_path in sorted(identity_dir.iterdir()):
                try:
                    with Image.open(image_path) as im:
                        embeddings.append(
                            _embed(np.asarray(im.convert("RGBA"), dtype=np.uint8))
                        )
                except OSError:
                    continue
            if embeddings:
                mean = np.mean(embeddings, axis=0)
                norm = np.linalg.norm(mean)
                self.templates[identity_dir.name] = mean / norm if norm > 0 else mean
        if not self.templates:
            raise ModelLoadError(f"no enrollable identities under {enroll_dir!r}")

    def detections(self, pixels: np.ndarray) -> list[dict]:
        query = _embed(pixels)
        best_label, best_score = None, -2.0
        for label, template in sorted(self.templates.items()):
            score = float(np.dot(query, template))
            if score > best_score:
                best_label, best_score = label, score
        height, width = pixels.shape[:2]
        return [
            {
                "box": [0, 0, width, height],
                "confidence": max(0.0, min(1.0, best_score)),
                "label": best_label,
            }
        ]
