"""CLI for the scoring oracle server.

    oracle-server --kind fd --transport stdio
    oracle-server --kind fr --model ./enrolled --transport http --port 9000
    oracle-server --echo transcript.txt
    oracle-server --check transcript.txt
"""

from __future__ import annotations

import argparse
import sys

from .detector import ModelLoadError
from .echo import TranscriptError
from .server import ServerConfig, build_core, serve_http, serve_stdio
from .transcript import golden_transcript_check


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-server", description=__doc__)
    parser.add_argument("--kind", choices=("fd", "fr"), default="fd")
    parser.add_argument("--model", help="cascade file (fd) or enrollment directory (fr)")
    parser.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    parser.add_argument("--port", type=int, default=8473)
    parser.add_argument("--echo", metavar="TRANSCRIPT",
                        help="replay recorded responses instead of running a model")
    parser.add_argument("--check", metavar="TRANSCRIPT",
                        help="verify a golden transcript and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.check:
        result = golden_transcript_check(args.check)
        sys.stdout.write(result.render())
        return 0 if result.ok else 1
    try:
        config = ServerConfig(kind=args.kind, model=args.model,
                              transport=args.transport, port=args.port, echo=args.echo)
        core = build_core(config)
    except (ModelLoadError, TranscriptError, ValueError, OSError) as exc:
        print(f"oracle-server: {exc}", file=sys.stderr)
        return 2
    if config.transport == "http":
        return serve_http(core, config.port)
    return serve_stdio(core)


if __name__ == "__main__":
    sys.exit(main())
