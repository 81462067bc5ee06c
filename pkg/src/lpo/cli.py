"""Command-line entry point: ``lpo run``, ``lpo report``, ``lpo verify-tables``.

Exit codes: 0 success, 2 no face detected, 3 oracle failure, 4 bad
configuration or unusable input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, report
from .oracle import NoFaceError, OracleError
from .raster import RasterError
from .search import SearchSpaceError
from .spotmodel import SpotError, SpotParams, load_spot, render_spot

EXIT_OK = 0
EXIT_NO_FACE = 2
EXIT_ORACLE = 3
EXIT_CONFIG = 4

# colour of a 532 nm laser dot as it reads on skin in a photo
DEFAULT_SPOT = SpotParams(colour=(140, 255, 130), opacity=0.9, size=(40, 40), falloff=0.35)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a two-phase attack campaign")
    run.add_argument("--front", required=True)
    run.add_argument("--left", required=True)
    run.add_argument("--right", required=True)
    run.add_argument("--pix-incr", type=int, required=True)
    run.add_argument("--fd-oracle", required=True, metavar="SPEC",
                     help="cmd:<command> | http:<url> | synthetic:<spec>")
    run.add_argument("--fr-oracle", required=True, metavar="SPEC")
    run.add_argument("--out", required=True)
    run.add_argument("--strategy", choices=("grid", "de"), default="grid")
    run.add_argument("--spot", help="spot PNG with alpha")
    run.add_argument("--spot-ref-width", type=int,
                     help="face width the spot was authored against")
    run.add_argument("--spot-color", help="RRGGBB hex for a rendered spot")
    run.add_argument("--spot-opacity", type=float, default=0.9)
    run.add_argument("--spot-size", default="40x40", metavar="WxH")
    run.add_argument("--exclude-eyes", action="store_true")
    run.add_argument("--k-front", type=int, default=1,
                     help="spot count for the front view (legacy rig: 3)")
    run.add_argument("--manifest", help="3-line file of adjusted photo paths")
    run.add_argument("--downscale", metavar="WxH",
                     help="reduce every input photo to this resolution first")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trace", action="store_true",
                     help="keep the per-candidate confidence trace")
    run.add_argument("--workers", type=int, default=1)

    rep = sub.add_parser("report", help="export campaign records as a result table")
    rep.add_argument("--records", required=True, help="directory of campaign.json records")
    rep.add_argument("--format", choices=("csv", "md", "json"), default="csv")
    rep.add_argument("--out", required=True)

    verify = sub.add_parser("verify-tables",
                            help="recompute the bundled reference tables")
    verify.add_argument("--fixtures", help="alternative fixture JSON")
    return parser


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError:
        raise SpotError(f"bad WxH size {text!r}") from None


def _build_spot(args) -> tuple:
    """Returns (SpotModel, rescale_to_face)."""
    if args.spot and args.spot_color:
        raise SpotError("--spot and --spot-color are mutually exclusive")
    if args.spot:
        return load_spot(args.spot, args.spot_ref_width), True
    if args.spot_color:
        colour = tuple(int(args.spot_color[i : i + 2], 16) for i in (0, 2, 4))
        params = SpotParams(colour=colour, opacity=args.spot_opacity,
                            size=_parse_size(args.spot_size))
    else:
        params = DEFAULT_SPOT
    if args.spot_ref_width:
        return render_spot(params, args.spot_ref_width), True
    # authored at attack scale: used as-is on every face
    return render_spot(params, 1_000), False


def _cmd_run(args) -> int:
    from .protocol import open_oracle

    downscale_to = _parse_size(args.downscale) if args.downscale else None
    spot, rescale = _build_spot(args)
    views = pipeline.ViewSet.load(
        {"front": args.front, "left": args.left, "right": args.right},
        downscale_to=downscale_to,
        spot_counts={"front": args.k_front, "left": 1, "right": 1},
    )
    campaign = pipeline.CampaignConfig(
        pixel_increment=args.pix_incr,
        strategy=args.strategy,
        exclude_eyes=args.exclude_eyes,
        de_seed=args.seed,
        keep_trace=args.trace,
        workers=args.workers,
        downscale_to=downscale_to,
        fd_spec=args.fd_oracle,
        fr_spec=args.fr_oracle,
    )
    with open_oracle(args.fd_oracle) as fd, open_oracle(args.fr_oracle) as fr:
        result, seconds = pipeline.run_campaign(
            views, fd, fr, spot, campaign, args.out,
            manifest=args.manifest, rescale_to_face=rescale,
        )
    stats = [
        report.ViewStatistics(
            view=view,
            image_size=tuple(doc["image_size"]),
            face_location=tuple(doc["face_box"]),
            spot_size=tuple(doc["spot_size"]),
            iterations=doc["search"]["iterations"],
            lowest_confidence_index=doc["search"]["lowest_confidence_index"],
            lowest_confidence_value=doc["search"]["best_confidence"],
            trace=tuple(map(tuple, doc["search"].get("trace", ()))) or None,
        )
        for view, doc in result.views.items()
    ]
    print(report.emit_stats(stats, args.pix_incr, seconds), end="")
    return EXIT_OK


def _records_to_rows(records_dir: str) -> list:
    rows = []
    for path in sorted(Path(records_dir).glob("**/campaign.json")):
        record = pipeline.CampaignResult.from_json(path.read_text())
        if record.phase < 2:
            continue
        stem = path.parent.name or "campaign"
        for view, doc in record.views.items():
            trial = report.TrialRecord(
                view=view,
                trial_id=stem,
                fd_initial=doc["initial_fd"]["confidence"] * 100,
                fd_final=doc["final_fd"]["confidence"] * 100,
                fr_initial=doc["initial_fr"]["confidence"] * 100,
                fr_final=doc["final_fr"]["confidence"] * 100,
                environment=frozenset(doc.get("environment", ())),
            )
            rows.append((trial, report.diff_row(trial)))
    return rows


def _cmd_report(args) -> int:
    rows = _records_to_rows(args.records)
    if not rows:
        print(f"no completed campaign records under {args.records}", file=sys.stderr)
        return EXIT_CONFIG
    report.export_table(rows, args.format, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _cmd_verify_tables(args) -> int:
    fixture = None
    if args.fixtures:
        fixture = json.loads(Path(args.fixtures).read_text())
    verification = report.verify_tables(fixture)
    print(verification.render(), end="")
    return EXIT_OK if verification.passed() else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_verify_tables(args)
    except NoFaceError as exc:
        print(f"lpo: {exc}", file=sys.stderr)
        return EXIT_NO_FACE
    except OracleError as exc:
        print(f"lpo: oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (RasterError, SpotError, SearchSpaceError, pipeline.CampaignError,
            ValueError, OSError) as exc:
        print(f"lpo: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
