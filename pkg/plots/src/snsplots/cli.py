"""Command line: ``plots <kind> --in <dir> --out <file.png|.svg>``."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureJob, InputError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from sns run artifacts"
    )
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="input_dir", required=True, help="run output directory")
    parser.add_argument("--out", dest="output_path", required=True, help="image path (.png or .svg)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    job = FigureJob(kind=args.kind, input_dir=args.input_dir, output_path=args.output_path)
    try:
        render(job)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
