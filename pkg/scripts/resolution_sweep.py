#!/usr/bin/env python3
"""Resolution-reduction experiment.

Reducing the pixel resolution of a physical test photo shrinks the captured
light spot proportionally, so the perturbation-to-image ratio is unchanged;
overlaying a fixed-size synthetic spot on the reduced image is the variant
that actually changes the ratio. This script measures the second variant:
the same planted-weakness oracle is attacked at several input resolutions
with a constant 24px spot, and the sweep reports how the search lattice and
the best reachable confidence move as resolution drops.

    python3 scripts/resolution_sweep.py
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from lpo.oracle import PlantedMinSpec, make_synthetic  # noqa: E402
from lpo.raster import downscale  # noqa: E402
from lpo.search import SearchConfig, grid_search  # noqa: E402
from lpo.spotmodel import SpotParams, render_spot  # noqa: E402

from demo_campaign import synthetic_portrait  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pix-incr", type=int, default=12)
    parser.add_argument("--resolutions", default="480,360,227,160,96",
                        help="comma-separated square target sizes")
    args = parser.parse_args()

    full = synthetic_portrait(640, 480, seed=3)
    spot = render_spot(SpotParams(colour=(140, 255, 130), opacity=0.9, size=(24, 24)), 100)
    config = SearchConfig(pixel_increment=args.pix_incr)

    print(f"{'resolution':>12} {'candidates':>11} {'best conf':>10} {'spot/image %':>13}")
    for size in (int(s) for s in args.resolutions.split(",")):
        image = downscale(full, (size, size))
        # weakness planted at mid-face, scaled with the image
        spec = PlantedMinSpec((size * 0.5, size * 0.42), radius=size * 0.3, floor=0.15)
        outcome = grid_search(image, spot, make_synthetic(spec), config)
        coverage = 100.0 * (24 * 24) / (size * size)
        print(f"{size:>9}px² {outcome.iterations:>11} "
              f"{outcome.best_confidence:>10.4f} {coverage:>12.2f}%")


if __name__ == "__main__":
    main()
