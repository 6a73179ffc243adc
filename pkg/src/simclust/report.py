"""Figure rendering for pipeline artifacts.

Figures are written straight to files (Agg backend, no display), sitting
alongside the delimited/JSON artifacts they illustrate: a heatmap for the
similarity matrix CSV, a dendrogram for the split, accuracy bars for the
eval report.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from scipy.cluster.hierarchy import dendrogram as scipy_dendrogram

from .clustering import Dendrogram
from .evaluation import EvalReport
from .similarity import SimilarityMatrix


def render_similarity_heatmap(simmat: SimilarityMatrix, path: str | Path) -> Path:
    path = Path(path)
    n = simmat.n
    fig, ax = plt.subplots(figsize=(max(4.0, 0.22 * n + 2), max(3.5, 0.22 * n + 1.5)))
    im = ax.imshow(simmat.values, cmap="viridis", vmin=0.0)
    fig.colorbar(im, ax=ax, label="cosine distance")
    if n <= 40:
        ax.set_xticks(range(n), simmat.labels, rotation=90, fontsize=7)
        ax.set_yticks(range(n), simmat.labels, fontsize=7)
    else:
        ax.set_xlabel("class index")
        ax.set_ylabel("class index")
    ax.set_title("Pairwise centroid cosine distance")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_dendrogram(dendro: Dendrogram, path: str | Path) -> Path:
    path = Path(path)
    n = len(dendro.labels)
    fig, ax = plt.subplots(figsize=(max(5.0, 0.3 * n + 2), 4.5))
    scipy_dendrogram(
        dendro.linkage_matrix(),
        labels=list(dendro.labels),
        leaf_rotation=90,
        leaf_font_size=7,
        ax=ax,
    )
    ax.set_ylabel("merge height")
    ax.set_title("Ward agglomeration of classes")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_eval_figures(report: EvalReport, out_dir: str | Path, stem: str = "eval") -> list[Path]:
    """Two charts: overall accuracy comparison and per-cluster top-1."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = ["routing", "end-to-end", "monolithic"]
    values = [report.routing_accuracy, report.end_to_end_top1, report.monolithic_top1]
    bars = ax.bar(names, values, color=["#4c72b0", "#55a868", "#c44e52"])
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(f"Pipeline accuracy (n={report.n_eval})")
    fig.tight_layout()
    overall = out_dir / f"{stem}_accuracy.png"
    fig.savefig(overall, dpi=150)
    plt.close(fig)
    written.append(overall)

    if report.per_cluster_top1:
        fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(report.per_cluster_top1) + 2), 3.5))
        cids = sorted(report.per_cluster_top1)
        bars = ax.bar(
            [f"cluster {c}" for c in cids],
            [report.per_cluster_top1[c] for c in cids],
            color="#4c72b0",
        )
        ax.bar_label(bars, fmt="%.3f", fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("top-1 (home-cluster head)")
        ax.set_title("Per-cluster accuracy, oracle routing")
        fig.tight_layout()
        per_cluster = out_dir / f"{stem}_per_cluster.png"
        fig.savefig(per_cluster, dpi=150)
        plt.close(fig)
        written.append(per_cluster)
    return written
