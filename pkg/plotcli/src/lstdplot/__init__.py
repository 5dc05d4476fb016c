"""Learning-curve figures from experiment summary CSVs.

A pure file-to-file tool: it consumes the summary schema
(lambda, n, mean_real_error, std_real_error, mean_estimation_error, count)
and renders one curve per lambda without recomputing any numerical result.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = [
    "SchemaMismatch",
    "EmptyInput",
    "PlotSpec",
    "read_summary",
    "plot_learning_curves",
]

__version__ = "0.1.0"

_KEY_COLUMNS = ("lambda", "n")


class SchemaMismatch(RuntimeError):
    """The CSV header lacks a column the plot needs."""


class EmptyInput(RuntimeError):
    """The CSV has no data rows."""


@dataclass(frozen=True)
class PlotSpec:
    """What to plot: input/output paths, the metric column, axis scale, lambda filter."""

    input_csv: Path
    output: Path
    metric: str = "mean_real_error"
    log_x: bool = False
    lambdas: tuple | None = None


def read_summary(path, metric: str) -> list[dict]:
    """Parse a summary CSV, validating the columns the plot consumes."""
    try:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            missing = [c for c in (*_KEY_COLUMNS, metric) if c not in header]
            if missing:
                raise SchemaMismatch(f"summary CSV lacks column(s) {missing}; header was {header}")
            rows = [
                {"lambda": float(row["lambda"]), "n": float(row["n"]), "y": float(row[metric])}
                for row in reader
            ]
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyInput(f"{path} has no data rows")
    return rows


def plot_learning_curves(spec: PlotSpec):
    """Render one metric-vs-n line per lambda and write the image file.

    Returns the matplotlib figure so callers can inspect what was drawn.
    """
    rows = read_summary(spec.input_csv, spec.metric)
    wanted = None if spec.lambdas is None else set(spec.lambdas)
    curves = {}
    for row in rows:
        lam = row["lambda"]
        if wanted is not None and not any(abs(lam - w) <= 1e-12 for w in wanted):
            continue
        curves.setdefault(lam, []).append((row["n"], row["y"]))
    if not curves:
        raise EmptyInput("no rows left after applying the lambda filter")

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for lam in sorted(curves):
        points = sorted(curves[lam])
        ax.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            label=f"$\\lambda$ = {lam:g}",
        )
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("number of samples n")
    ax.set_ylabel(spec.metric)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output)
    return fig
