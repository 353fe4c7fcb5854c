"""Figure rendering for the report path: embedding scatters and metric bars.

Figures are written next to the delimited outputs and must be byte-stable
across reruns, so no timestamps or environment-dependent text may appear.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import CLASSIFICATION
from .embed import Embedding

_STYLE = {
    "figure.figsize": (5.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _styled():
    return plt.rc_context(_STYLE)


def save_embedding_figure(
    embedding: Embedding,
    labels: np.ndarray,
    label_kind: str,
    path,
    title: str = "",
    label_names: tuple[str, ...] = (),
) -> None:
    """Scatter the first two coordinates, colored by label."""
    coords = embedding.coords
    x = coords[:, 0]
    y = coords[:, 1] if coords.shape[1] > 1 else np.zeros_like(x)
    with _styled():
        fig, ax = plt.subplots()
        if label_kind == CLASSIFICATION:
            classes = np.unique(labels)
            cmap = plt.get_cmap("tab10")
            for c in classes:
                mask = labels == c
                name = label_names[c] if c < len(label_names) else str(c)
                ax.scatter(x[mask], y[mask], s=12, color=cmap(int(c) % 10), label=name)
            ax.legend(loc="best", frameon=False)
        else:
            sc = ax.scatter(x, y, s=12, c=labels, cmap="viridis")
            fig.colorbar(sc, ax=ax, label="label")
        ax.set_xlabel("coord 1")
        ax.set_ylabel("coord 2")
        ax.set_title(title or embedding.method)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_metric_bars(
    aggregates: list[dict],
    metric: str,
    path,
    title: str = "",
    reference: float | None = None,
) -> None:
    """Bar chart of a metric's mean +/- sd per (dataset, method) group."""
    rows = [r for r in aggregates if r["metric"] == metric]
    if not rows:
        return
    rows = sorted(rows, key=lambda r: (r["dataset"], r["source"], r["algorithm"]))
    names = [f"{r['dataset']}\n{r['source']}:{r['algorithm']}" for r in rows]
    means = [r["mean"] for r in rows]
    sds = [r["sd"] for r in rows]
    with _styled():
        width = max(5.0, 0.9 * len(rows) + 1.5)
        fig, ax = plt.subplots(figsize=(width, 4.0))
        pos = np.arange(len(rows))
        ax.bar(pos, means, yerr=sds, capsize=3, color="tab:blue", alpha=0.85)
        if reference is not None:
            ax.axhline(reference, color="tab:red", linewidth=1, linestyle="--")
        ax.set_xticks(pos)
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel(metric)
        ax.set_title(title or metric)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
