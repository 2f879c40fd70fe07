"""Command line: render a figure bundle into image files."""

from __future__ import annotations

import argparse
import sys

from .bundle import BundleError, load_bundle
from .render import render_bundle

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowpoe-plots", description="Render flowpoe figure bundles")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render a bundle.json into images")
    _render_args(p)
    return parser


def _render_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("bundle", help="path to a figure bundle JSON")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--formats", default="png,svg",
                   help="comma-separated image formats")


def _run_render(args: argparse.Namespace) -> int:
    formats = tuple(f.strip().lower() for f in args.formats.split(",") if f.strip())
    if not formats:
        print("error: no output formats requested", file=sys.stderr)
        return EXIT_USAGE
    try:
        bundle = load_bundle(args.bundle)
        written = render_bundle(bundle, args.out, formats)
    except FileNotFoundError:
        print(f"error: no such bundle {args.bundle}", file=sys.stderr)
        return EXIT_RUNTIME
    except BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    return _run_render(args)


def render_main(argv=None) -> int:
    """Entry point for the bare `render <bundle.json> --out <dir>` form."""
    parser = argparse.ArgumentParser(
        prog="render", description="Render a flowpoe figure bundle")
    _render_args(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    return _run_render(args)


if __name__ == "__main__":
    sys.exit(main())
