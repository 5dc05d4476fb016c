"""Command-line entry point: plot --in summary.csv --out fig.png."""

import argparse
import sys
from pathlib import Path

from . import EmptyInput, PlotSpec, SchemaMismatch, plot_learning_curves


def _floats(text):
    return tuple(float(part) for part in text.split(",") if part)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lstd-plot",
        description="Render learning curves (one line per lambda) from a summary CSV",
    )
    parser.add_argument("--in", dest="input_csv", type=Path, required=True, help="summary CSV")
    parser.add_argument("--out", dest="output", type=Path, required=True, help="image file")
    parser.add_argument("--metric", default="mean_real_error", help="summary column to plot")
    parser.add_argument("--logx", action="store_true", help="logarithmic sample axis")
    parser.add_argument("--lambdas", type=_floats, help="comma-separated lambda filter")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        input_csv=args.input_csv,
        output=args.output,
        metric=args.metric,
        log_x=args.logx,
        lambdas=args.lambdas,
    )
    try:
        figure = plot_learning_curves(spec)
    except (SchemaMismatch, EmptyInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output} ({len(figure.axes[0].lines)} curves)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
