"""Figure rendering for the reporting commands.

Every plot lands as a PNG next to the delimited output it illustrates;
backend is always Agg (file output only).
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .classify import ClassifierReport
from .evaluate import GridSearchResult, SweepRow

__all__ = ["plot_sweep", "plot_grid_search", "plot_classifier_comparison", "plot_series"]

_METRIC_PANELS = (
    ("tpr_mean", "tpr_std", "TPR"),
    ("ppv_mean", "ppv_std", "PPV"),
    ("fp_per_hour_mean", "fp_per_hour_std", "FP / hour"),
)


def plot_sweep(rows: Sequence[SweepRow], axis: str, path: str | Path) -> Path:
    """TPR / PPV / FP-per-hour against the swept axis, one line per detector."""
    path = Path(path)
    algos = sorted({r.algo for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharex=True)
    for (mean_key, std_key, title), ax in zip(_METRIC_PANELS, axes):
        for algo in algos:
            rs = sorted((r for r in rows if r.algo == algo), key=lambda r: r.axis_value)
            xs = [r.axis_value for r in rs]
            ys = [getattr(r, mean_key) for r in rs]
            es = [getattr(r, std_key) for r in rs]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2, label=algo)
        ax.set_xlabel(axis)
        ax.set_title(title)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_grid_search(result: GridSearchResult, algo: str, path: str | Path) -> Path:
    """Mean F1 per grid point, best point highlighted."""
    path = Path(path)
    f1s = [row[1] for row in result.table]
    stds = [row[2] for row in result.table]
    xs = range(len(f1s))
    best_i = next(i for i in xs if result.table[i][0] == result.best)
    fig, ax = plt.subplots(figsize=(max(6, len(f1s) * 0.25), 4))
    ax.errorbar(xs, f1s, yerr=stds, marker="o", capsize=2, lw=1)
    ax.plot([best_i], [f1s[best_i]], marker="*", ms=16, color="tab:red", ls="none", label=f"best F1={result.best_f1:.3f}")
    ax.set_xlabel("grid point")
    ax.set_ylabel("mean F1")
    ax.set_title(f"{algo} grid search")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_classifier_comparison(reports: Mapping[str, ClassifierReport], path: str | Path) -> Path:
    """Grouped bars of the classification metrics per detector."""
    path = Path(path)
    metrics = ("acc", "auroc", "aucpr", "tpr", "ppv", "f1")
    algos = list(reports)
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(algos)), 4))
    for j, m in enumerate(metrics):
        xs = [i + j * width for i in range(len(algos))]
        ys = [getattr(reports[a], m) for a in algos]
        ax.bar(xs, ys, width=width, label=m.upper())
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(algos))])
    ax.set_xticklabels(algos)
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8, ncol=3)
    ax.set_title("classification by changepoint detector")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_series(series, result=None, path: str | Path = "series.png", max_beats: int | None = 5000) -> Path:
    """Tachogram with ground-truth (dashed) and detected (solid) changepoints."""
    path = Path(path)
    n = series.n if max_beats is None else min(series.n, max_beats)
    fig, ax = plt.subplots(figsize=(11, 3.2))
    ax.plot(range(n), series.intervals[:n], lw=0.5, color="tab:blue")
    if series.truth:
        for i in (i for i in series.truth if i < n):
            ax.axvline(i, color="tab:green", ls="--", lw=0.8, alpha=0.7)
    if result is not None:
        for i in (i for i in result.indices if i < n):
            ax.axvline(i, color="tab:red", lw=0.8, alpha=0.7)
    ax.set_xlabel("beat index")
    ax.set_ylabel("RR (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
