"""Figure rendering for experiment results and learned models.

The reporting path sits beside the delimited output: an experiment run
writes its results CSV and, unless asked not to, these figures into the
same directory.  Everything renders through the Agg backend so runs work
headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from tackl.core import CombinedModel, combined_matrix
from tackl.metrics import AggregateRow, MetricRecord, aggregate_trials
from tackl.persist import pca_reduce

_METHOD_STYLE = {
    "CKL-random": dict(color="tab:blue", linestyle="--", marker="o"),
    "A-CKL": dict(color="tab:blue", linestyle="-", marker="s"),
    "TACKL-random": dict(color="tab:red", linestyle="--", marker="o"),
    "A-TACKL": dict(color="tab:red", linestyle="-", marker="s"),
}


def _style(method: str) -> dict:
    return _METHOD_STYLE.get(method, dict(marker="o"))


def _curve_figure(
    rows: Sequence[AggregateRow], value, err, ylabel: str, title: str
) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    methods = sorted({r.method for r in rows})
    for method in methods:
        cells = sorted((r for r in rows if r.method == method), key=lambda r: r.round)
        x = [c.round for c in cells]
        y = [value(c) for c in cells]
        yerr = [err(c) if err(c) is not None else 0.0 for c in cells]
        ax.errorbar(x, y, yerr=yerr, label=method, capsize=3, markersize=4, **_style(method))
    ax.set_xlabel("round")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def render_report(
    records: Sequence[MetricRecord], out_dir: str | Path, prefix: str = ""
) -> list[Path]:
    """Write error and likelihood curves (mean, 90% CI bars) as PNGs.

    Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = aggregate_trials(records)
    written = []

    fig = _curve_figure(
        rows,
        value=lambda r: r.error_mean,
        err=lambda r: r.error_ci,
        ylabel="query prediction error",
        title="Query prediction error by round (mean, 90% CI)",
    )
    path = out_dir / f"{prefix}error_vs_round.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig = _curve_figure(
        rows,
        value=lambda r: r.mean_likelihood,
        err=lambda r: None,
        ylabel="mean likelihood",
        title="Mean response likelihood by round",
    )
    path = out_dir / f"{prefix}likelihood_vs_round.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def embedding_projection(model: CombinedModel) -> np.ndarray:
    """2-D view of the combined points for display: PCA when possible."""
    points = combined_matrix(model)
    n, dim = points.shape
    if dim == 0:
        return np.zeros((n, 2))
    if dim == 1 or n < 3:
        out = np.zeros((n, 2))
        out[:, 0] = points[:, 0] if dim >= 1 else 0.0
        return out
    k = min(2, dim, n - 1)
    proj = pca_reduce(points, k)
    if proj.shape[1] == 1:
        proj = np.hstack([proj, np.zeros((n, 1))])
    return proj


def render_embedding(
    model: CombinedModel, out_path: str | Path, labels: Sequence[str] | None = None
) -> Path:
    """Scatter the 2-D projection of the learned embedding."""
    out_path = Path(out_path)
    proj = embedding_projection(model)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(proj[:, 0], proj[:, 1], s=26, color="tab:purple", alpha=0.8)
    if labels is not None:
        for (x, y), label in zip(proj, labels):
            ax.annotate(str(label), (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_title("Learned embedding (2-D projection)")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
