"""Report figures (matplotlib, Agg backend, written straight to files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRIC_NAMES, BucketRow, MetricReport  # noqa: E402

LABELS = {"s_measure": "S", "f_weighted": "wF", "f_mean": "mF", "e_mean": "mE", "mae": "MAE"}


def plot_report(report: MetricReport, path: str, title: str = "") -> str:
    """Bar chart of the five summary metrics."""
    values = [getattr(report, k) for k in METRIC_NAMES]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    bars = ax.bar([LABELS[k] for k in METRIC_NAMES], values, color="#4c72b0")
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_title(title or f"{report.n_images} images")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_buckets(rows: list[BucketRow], path: str, metrics=("s_measure", "mae")) -> str:
    """Metric curves over foreground-ratio buckets, with image counts as bars."""
    used = [r for r in rows if r.count]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if used:
        centers = np.array([(r.lo + r.hi) / 2 for r in used])
        width = (used[0].hi - used[0].lo) * 0.8
        counts = np.array([r.count for r in used], dtype=float)
        twin = ax.twinx()
        twin.bar(centers, counts, width=width, color="#dddddd", zorder=0)
        twin.set_ylabel("images")
        ax.set_zorder(twin.get_zorder() + 1)
        ax.patch.set_visible(False)
        for key in metrics:
            ax.plot(centers, [getattr(r.report, key) for r in used], marker="o", label=LABELS[key])
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("foreground ratio")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
