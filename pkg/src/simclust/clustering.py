"""Ward-linkage agglomerative clustering of classes over the similarity matrix.

Each class is represented by its row of the similarity matrix, treated as a
point in R^n under the Euclidean metric (the default behavior of standard
agglomerative-clustering libraries when handed a square matrix as data).
Merging proceeds by the Lance-Williams recurrence for Ward's criterion on
squared distances:

    d2(A+B, C) = ((|A|+|C|) d2(A,C) + (|B|+|C|) d2(B,C) - |C| d2(A,B))
                 / (|A|+|B|+|C|)

which keeps d2 proportional to the increase in total within-cluster squared
error, so the greedy minimal merge is the minimal-ESS-increase merge. The
reported merge height is sqrt(d2).

Ties on the merge cost are broken by the lexicographically smallest pair of
cluster representatives, a cluster's representative being its smallest leaf
index. This makes the merge sequence deterministic for a fixed label order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .similarity import CentroidSet, SimilarityMatrix, compute_centroid, cosine_distance
from .store import ClassEmbeddings, ClusterSplit


@dataclass(frozen=True)
class Merge:
    """One agglomeration step. Node ids: leaves are 0..n-1 in label order,
    the i-th merge creates node n+i."""

    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    labels: tuple[str, ...]
    merges: tuple[Merge, ...]

    def __post_init__(self):
        n = len(self.labels)
        if len(self.merges) != n - 1:
            raise ValidationError(f"expected {n - 1} merges, got {len(self.merges)}")
        merged = [m for step in self.merges for m in (step.left, step.right)]
        if len(set(merged)) != len(merged):
            raise ValidationError("a node was merged more than once")

    def heights(self) -> list[float]:
        return [m.height for m in self.merges]

    def leaves_under(self, node: int) -> list[int]:
        n = len(self.labels)
        if node < n:
            return [node]
        m = self.merges[node - n]
        return self.leaves_under(m.left) + self.leaves_under(m.right)

    def cut(self, k: int) -> list[list[int]]:
        """Leaf-index groups after undoing the last k-1 merges."""
        n = len(self.labels)
        if not 1 <= k <= n:
            raise ValidationError(f"k must be in [1, {n}], got {k}")
        alive = {i: [i] for i in range(n)}
        for step, m in enumerate(self.merges[: n - k]):
            alive[n + step] = alive.pop(m.left) + alive.pop(m.right)
        return list(alive.values())

    def linkage_matrix(self) -> np.ndarray:
        """Merges as an (n-1, 4) array: left, right, height, size (for plotting)."""
        return np.array(
            [[m.left, m.right, m.height, m.size] for m in self.merges], dtype=np.float64
        )


def ward_cluster(simmat: SimilarityMatrix, k: int) -> tuple[ClusterSplit, Dendrogram]:
    """Partition the matrix's classes into k clusters.

    Cluster ids are assigned by order of first appearance in label order, so
    the result is deterministic and independent of internal merge bookkeeping.
    """
    n = simmat.n
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")

    points = simmat.values.astype(np.float64)
    # squared Euclidean distances between rows; exact symmetry by construction
    d2 = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            diff = points[i] - points[j]
            d2[i, j] = d2[j, i] = float(np.dot(diff, diff))

    active = list(range(n))           # positions into the d2 matrix
    node_id = list(range(n))          # dendrogram node id per position
    size = [1] * n
    rep = list(range(n))              # smallest leaf index per position
    merges: list[Merge] = []

    while len(active) > 1:
        best = None  # (cost, rep_lo, rep_hi, pos_a, pos_b)
        for ia in range(len(active)):
            for ib in range(ia + 1, len(active)):
                a, b = active[ia], active[ib]
                cost = d2[a, b]
                lo, hi = min(rep[a], rep[b]), max(rep[a], rep[b])
                key = (cost, lo, hi)
                if best is None or key < best[:3]:
                    best = (cost, lo, hi, a, b)
        cost, _, _, a, b = best
        if rep[b] < rep[a]:
            a, b = b, a  # left child is the cluster with the smaller representative

        new_node = n + len(merges)
        merges.append(Merge(node_id[a], node_id[b], float(np.sqrt(cost)), size[a] + size[b]))

        # Lance-Williams update of every remaining cluster against the union,
        # written into slot a; slot b dies.
        na, nb = size[a], size[b]
        for c in active:
            if c in (a, b):
                continue
            nc = size[c]
            d2[a, c] = d2[c, a] = (
                (na + nc) * d2[a, c] + (nb + nc) * d2[b, c] - nc * cost
            ) / (na + nb + nc)
        size[a] = na + nb
        rep[a] = min(rep[a], rep[b])
        node_id[a] = new_node
        active.remove(b)

    dendrogram = Dendrogram(simmat.labels, tuple(merges))
    split = _split_from_groups(simmat.labels, dendrogram.cut(k), k, dendrogram.heights())
    return split, dendrogram


def _split_from_groups(
    labels: tuple[str, ...], groups: list[list[int]], k: int, heights: list[float]
) -> ClusterSplit:
    group_of = {}
    for gi, group in enumerate(groups):
        for leaf in group:
            group_of[leaf] = gi
    ids: dict[int, int] = {}
    assignments: dict[str, int] = {}
    for leaf, label in enumerate(labels):
        gi = group_of[leaf]
        if gi not in ids:
            ids[gi] = len(ids)
        assignments[label] = ids[gi]
    return ClusterSplit(k=k, assignments=assignments, linkage="ward", merge_heights=tuple(heights))


def cluster_centroid_sets(split: ClusterSplit, centroids: CentroidSet) -> dict[int, CentroidSet]:
    """Partition a centroid set by cluster, preserving class order within each."""
    split_names = set(split.assignments)
    centroid_names = set(centroids.centroids)
    if split_names != centroid_names:
        missing = sorted(split_names ^ centroid_names)
        raise ValidationError(f"split and centroid set disagree on classes: {missing}")
    return {cid: centroids.subset(split.members(cid)) for cid in range(split.k)}


def assign_new_class(
    new_class: ClassEmbeddings, split: ClusterSplit, centroids: CentroidSet
) -> int:
    """Cluster whose member centroids have the smallest mean cosine distance
    to the new class's centroid. Ties go to the lowest cluster id."""
    if new_class.dim != centroids.dim:
        raise ValidationError(
            f"new class dim {new_class.dim} does not match centroid dim {centroids.dim}"
        )
    c_new = compute_centroid(new_class)
    if float(np.dot(c_new, c_new)) == 0.0:
        raise ValidationError(f"class {new_class.class_name!r} has a zero-norm centroid")
    by_cluster = cluster_centroid_sets(split, centroids)
    best_id, best_mean = 0, np.inf
    for cid in range(split.k):
        members = by_cluster[cid].centroids
        mean_d = sum(cosine_distance(c_new, c) for c in members.values()) / len(members)
        if mean_d < best_mean:
            best_id, best_mean = cid, mean_d
    return best_id
