"""Static figure generation from round report CSVs.

Plot content is a pure function of the input files: the same CSVs always
render the same curves. Output format follows the file extension; the
defaults are SVG.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .activeloop import ROUNDS_CSV_HEADER

_COLUMNS = ROUNDS_CSV_HEADER.split(",")


def read_rounds_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse one rounds.csv into column arrays; malformed input raises."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty report: {path}") from None
        if header != _COLUMNS:
            raise ValueError(f"unexpected header in {path}: {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"report has no data rows: {path}")
    data = np.array(rows, dtype=np.float64)
    if data.shape[1] != len(_COLUMNS):
        raise ValueError(f"malformed row width in {path}")
    return {name: data[:, i] for i, name in enumerate(_COLUMNS)}


def aggregate_metric(
    tables: list[dict[str, np.ndarray]], metric: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Across-seed (rounds, lower, mean, upper) envelope for one metric."""
    rounds = tables[0]["round"]
    for t in tables:
        if not np.array_equal(t["round"], rounds):
            raise ValueError("reports cover different round ranges")
    stacked = np.stack([t[metric] for t in tables])
    return rounds, stacked.min(axis=0), stacked.mean(axis=0), stacked.max(axis=0)


def plot_metric_over_rounds(
    csv_paths: list[str | Path], out_path: str | Path, metric: str = "topk_mean"
) -> Path:
    """Metric-vs-round lines; multiple seeds add a mean line and min-max band."""
    if metric not in _COLUMNS:
        raise ValueError(f"unknown metric {metric!r}")
    tables = [read_rounds_csv(p) for p in csv_paths]
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(tables) == 1:
        ax.plot(tables[0]["round"], tables[0][metric], marker="o")
    else:
        rounds, lo, mean, hi = aggregate_metric(tables, metric)
        ax.fill_between(rounds, lo, hi, alpha=0.25, label="min-max")
        ax.plot(rounds, mean, marker="o", label=f"mean of {len(tables)} seeds")
        ax.legend()
    ax.set_xlabel("round")
    ax.set_ylabel(metric)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_score_scatter(
    csv_paths: list[str | Path], out_path: str | Path, spread: str = "diversity"
) -> Path:
    """Per-round query score against diversity or novelty, one series per file."""
    if spread not in ("diversity", "novelty"):
        raise ValueError(f"spread must be diversity or novelty, got {spread!r}")
    tables = [read_rounds_csv(p) for p in csv_paths]
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, t in enumerate(tables):
        ax.scatter(t[spread], t["query_mean"], s=18, alpha=0.8, label=f"seed {i}")
    ax.set_xlabel(f"query {spread} (tokens)")
    ax.set_ylabel("query mean score")
    ax.grid(True, alpha=0.3)
    if len(tables) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def render_standard_plots(csv_paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """The default figure set: one round curve plus two scatter views."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        plot_metric_over_rounds(csv_paths, out_dir / "rounds_topk_mean.svg", "topk_mean"),
        plot_score_scatter(csv_paths, out_dir / "score_vs_diversity.svg", "diversity"),
        plot_score_scatter(csv_paths, out_dir / "score_vs_novelty.svg", "novelty"),
    ]
