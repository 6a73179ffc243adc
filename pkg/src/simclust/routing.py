"""Query-to-cluster selection and head dispatch.

A query is compared against every class centroid of every cluster by cosine
similarity; per-cluster scores aggregate those similarities (mean by default,
sum for literal fidelity to a running-total formulation, behind the `sum`
mode). The cluster with the largest score wins, lowest id on exact ties.
Sum aggregation biases toward clusters with more classes, which is why mean
is the default.

The query is normalized once and only dot products follow, so the whole
computation is exactly equivariant under power-of-two scalings and the
chosen cluster is scale-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .similarity import CentroidSet
from .store import ClusterSplit

AGGREGATE_MODES = ("mean", "sum")


@dataclass(frozen=True)
class RoutingDecision:
    chosen_cluster: int
    scores: dict[int, float]
    aggregate_mode: str

    def to_dict(self) -> dict:
        return {
            "chosen_cluster": self.chosen_cluster,
            "scores": {str(cid): s for cid, s in self.scores.items()},
            "aggregate_mode": self.aggregate_mode,
        }


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.sqrt(np.dot(v, v)))
    if norm == 0.0:
        raise ValidationError(f"{what} has zero norm")
    return v / norm


def select_cluster(
    query: np.ndarray,
    cluster_centroids: dict[int, CentroidSet],
    mode: str = "mean",
) -> RoutingDecision:
    """Aggregate cosine similarity of the query to each cluster's class
    centroids; argmax with ties going to the lowest cluster id."""
    if mode not in AGGREGATE_MODES:
        raise ValidationError(f"aggregate mode must be one of {AGGREGATE_MODES}, got {mode!r}")
    if not cluster_centroids:
        raise ValidationError("no clusters to select from")
    q = _unit(query, "query")
    scores: dict[int, float] = {}
    for cid in sorted(cluster_centroids):
        cset = cluster_centroids[cid]
        if len(cset.centroids) == 0:
            raise ValidationError(f"cluster {cid} has an empty centroid set")
        if cset.dim != q.shape[0]:
            raise ValidationError(
                f"query dim {q.shape[0]} does not match cluster {cid} dim {cset.dim}"
            )
        total = 0.0
        for name, c in cset.centroids.items():
            total += float(np.dot(q, _unit(c, f"centroid {name!r}")))
        scores[cid] = total / len(cset.centroids) if mode == "mean" else total
    chosen = max(scores, key=lambda cid: (scores[cid], -cid))
    return RoutingDecision(chosen_cluster=chosen, scores=scores, aggregate_mode=mode)


def predict_class(
    query: np.ndarray,
    split: ClusterSplit,
    cluster_centroids: dict[int, CentroidSet],
    heads: dict[int, object],
    mode: str = "mean",
) -> tuple[str, RoutingDecision]:
    """Route, then run only the chosen cluster's head on the same vector.

    The feature vector is reused as-is: exactly one head evaluation happens
    and nothing is re-extracted.
    """
    missing = [cid for cid in range(split.k) if cid not in heads]
    if missing:
        raise ValidationError(f"no head for clusters {missing}")
    decision = select_cluster(query, cluster_centroids, mode)
    head = heads[decision.chosen_cluster]
    return head.predict(np.asarray(query, dtype=np.float64)), decision
