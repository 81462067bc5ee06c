import json
import sys
from pathlib import Path

import numpy as np
import pytest

from lpo.raster import ImageRaster

FIXTURE_SERVER = Path(__file__).parent / "oracle_fixture_server.py"


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def make_image(rng):
    """Random RGBA raster factory."""

    def build(width, height, opaque=True, seed=None):
        local = np.random.default_rng(seed) if seed is not None else rng
        px = local.integers(0, 256, size=(height, width, 4), dtype=np.uint8)
        if opaque:
            px[:, :, 3] = 255
        return ImageRaster(px)

    return build


def solid_image(width, height, colour=(90, 120, 150, 255)):
    px = np.zeros((height, width, 4), dtype=np.uint8)
    px[:, :] = colour
    return ImageRaster(px)


@pytest.fixture
def write_script(tmp_path):
    """Write a canned-response script and return the oracle command line."""

    def build(responses, kind="fd", name="oracle_script.json", **extra):
        script = {"kind": kind, "responses": responses, **extra}
        path = tmp_path / name
        path.write_text(json.dumps(script))
        return f"{sys.executable} {FIXTURE_SERVER} --script {path}"

    return build


def detections_response(*dets):
    return {
        "detections": [
            {"box": list(box), "confidence": conf, **({"label": label} if label else {})}
            for box, conf, label in dets
        ]
    }
