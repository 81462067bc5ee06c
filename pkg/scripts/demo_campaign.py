#!/usr/bin/env python3
"""End-to-end demo campaign against synthetic oracles.

Generates three synthetic portrait photos, runs the full two-phase CLI flow
(re-using the originals as the "adjusted" photos via a manifest) and leaves
every artifact in the output directory. No external model, no network.

    python3 scripts/demo_campaign.py --out /tmp/lpo-demo
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from lpo.cli import main as lpo_main  # noqa: E402
from lpo.raster import ImageRaster, save_png  # noqa: E402


def synthetic_portrait(width=640, height=480, tilt=0.0, seed=0):
    """A face-like test card: head ellipse, eyes, mouth on a noisy backdrop."""
    rng = np.random.default_rng(seed)
    px = rng.integers(28, 52, size=(height, width, 4), dtype=np.uint8)
    px[:, :, 3] = 255
    ys, xs = np.mgrid[0:height, 0:width]
    cx, cy = width / 2 + tilt * width / 8, height / 2
    head = ((xs - cx) / (width * 0.22)) ** 2 + ((ys - cy) / (height * 0.34)) ** 2 <= 1
    px[head] = (198, 166, 140, 255)
    for ex in (cx - width * 0.08, cx + width * 0.08):
        eye = ((xs - ex) / (width * 0.025)) ** 2 + ((ys - (cy - height * 0.08)) / (height * 0.02)) ** 2 <= 1
        px[eye] = (40, 30, 30, 255)
    mouth = (abs(xs - cx) < width * 0.07) & (abs(ys - (cy + height * 0.14)) < height * 0.012)
    px[mouth] = (120, 60, 60, 255)
    return ImageRaster(px)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="/tmp/lpo-demo")
    parser.add_argument("--pix-incr", type=int, default=40)
    parser.add_argument("--strategy", choices=("grid", "de"), default="grid")
    parser.add_argument("--exclude-eyes", action="store_true")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = out / "inputs"
    inputs.mkdir(exist_ok=True)
    paths = {}
    for i, view in enumerate(("front", "left", "right")):
        path = inputs / f"{view}.png"
        save_png(synthetic_portrait(tilt=(i - 1) * 0.8, seed=i), path)
        paths[view] = str(path)

    manifest = inputs / "adjusted.txt"
    manifest.write_text("\n".join(paths.values()) + "\n")

    argv = [
        "run",
        "--front", paths["front"], "--left", paths["left"], "--right", paths["right"],
        "--pix-incr", str(args.pix_incr),
        "--strategy", args.strategy,
        "--fd-oracle", "synthetic:planted:320,180,150,0.12,0.97",
        "--fr-oracle", "synthetic:constant:0.43",
        "--out", str(out / "campaign"),
        "--manifest", str(manifest),
        "--trace",
    ]
    if args.exclude_eyes:
        argv.append("--exclude-eyes")
    code = lpo_main(argv)
    print(f"\nartifacts in {out / 'campaign'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
