"""Per-class feature centroids and the pairwise cosine-distance matrix.

The class centroid is the element-wise mean of its embedding vectors (the
fixed point of one-cluster Lloyd iteration, computed in closed form so no
seed is involved). The matrix entry S[i][j] is the cosine *distance*
1 - cos(centroid_i, centroid_j): small means similar, 0 on the diagonal,
2 for opposite directions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .store import ClassEmbeddings, DatasetStore

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class CentroidSet:
    """class name -> float64 feature centroid, in canonical class order."""

    dim: int
    centroids: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.centroids:
            raise ValidationError("centroid set is empty")
        converted: dict[str, np.ndarray] = {}
        for name, c in self.centroids.items():
            c = np.array(c, dtype=np.float64)
            if c.shape != (self.dim,):
                raise ValidationError(
                    f"centroid for {name!r} has shape {c.shape}, expected ({self.dim},)"
                )
            c.setflags(write=False)
            converted[name] = c
        object.__setattr__(self, "centroids", converted)

    @property
    def names(self) -> list[str]:
        return list(self.centroids)

    def matrix(self) -> np.ndarray:
        """Centroids stacked as rows, in name order."""
        return np.stack([self.centroids[n] for n in self.centroids])

    def subset(self, names: list[str]) -> "CentroidSet":
        missing = [n for n in names if n not in self.centroids]
        if missing:
            raise ValidationError(f"no centroid for classes: {missing}")
        return CentroidSet(self.dim, {n: self.centroids[n] for n in names})


@dataclass(frozen=True)
class SimilarityMatrix:
    """Labeled n_c x n_c matrix of pairwise cosine distances."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        n = len(self.labels)
        if vals.shape != (n, n):
            raise ValidationError(f"matrix shape {vals.shape} does not match {n} labels")
        if np.max(np.abs(vals - vals.T), initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("similarity matrix is not symmetric (tolerance 1e-9)")
        if np.max(np.abs(np.diagonal(vals)), initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("similarity matrix diagonal is not zero")
        if vals.size and (vals.min() < -SYMMETRY_TOL or vals.max() > 2.0 + SYMMETRY_TOL):
            raise ValidationError("similarity matrix entries must lie in [0, 2]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return len(self.labels)


def compute_centroid(cls: ClassEmbeddings) -> np.ndarray:
    """Element-wise mean of the class's vectors, float64."""
    return cls.vectors.astype(np.float64).mean(axis=0)


def compute_inertia(cls: ClassEmbeddings) -> float:
    """Sum of squared Euclidean distances of the class's vectors to its centroid."""
    x = cls.vectors.astype(np.float64)
    diff = x - compute_centroid(cls)
    return float(np.sum(diff * diff))


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v). Raises on zero-norm input rather than fudging with an epsilon."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = float(np.sqrt(np.dot(u, u)))
    nv = float(np.sqrt(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine distance undefined for zero-norm vector")
    # rounding can push the ratio a ulp past +-1; clamp so the distance is
    # exactly within [0, 2]
    ratio = min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv)))
    return 1.0 - ratio


def compute_centroids(store: DatasetStore) -> CentroidSet:
    return CentroidSet(store.dim, {c.class_name: compute_centroid(c) for c in store.classes})


def build_similarity_matrix(store: DatasetStore) -> tuple[CentroidSet, SimilarityMatrix]:
    """Pairwise cosine distances of all class centroids, labels in store order.

    The upper triangle is computed once and mirrored to the lower; the
    diagonal is forced to exactly 0. This kills floating-point asymmetry at
    the source, so consumers can rely on S == S.T bit for bit.
    """
    centroids = compute_centroids(store)
    names = store.class_names
    for name in names:
        c = centroids.centroids[name]
        if float(np.dot(c, c)) == 0.0:
            raise ValidationError(f"class {name!r} has a zero-norm centroid")
    n = len(names)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = cosine_distance(centroids.centroids[names[i]], centroids.centroids[names[j]])
            values[i, j] = d
            values[j, i] = d
    return centroids, SimilarityMatrix(tuple(names), values)


# ---------------------------------------------------------------------------
# CSV round trip: header row is an empty cell followed by the labels, each
# data row is its label followed by the shortest round-trip decimal of every
# 64-bit value. repr() of a Python float is exactly that representation.


def save_matrix_csv(simmat: SimilarityMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([""] + list(simmat.labels))
        for label, row in zip(simmat.labels, simmat.values):
            writer.writerow([label] + [repr(float(v)) for v in row])


def load_matrix_csv(path: str | Path) -> SimilarityMatrix:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:1] != [""]:
        raise FormatError(f"{path}: first cell of the header row must be empty")
    labels = rows[0][1:]
    n = len(labels)
    if len(rows) != n + 1:
        raise FormatError(f"{path}: expected {n} data rows, found {len(rows) - 1}")
    values = np.zeros((n, n), dtype=np.float64)
    for i, row in enumerate(rows[1:]):
        if len(row) != n + 1:
            raise FormatError(f"{path}: row {i + 1} has {len(row)} cells, expected {n + 1}")
        if row[0] != labels[i]:
            raise FormatError(
                f"{path}: row label {row[0]!r} does not match column label {labels[i]!r}"
            )
        try:
            values[i] = [float(v) for v in row[1:]]
        except ValueError as e:
            raise FormatError(f"{path}: row {i + 1}: {e}") from None
    if np.max(np.abs(values - values.T), initial=0.0) > SYMMETRY_TOL:
        raise ValidationError(f"{path}: matrix is not symmetric (tolerance 1e-9)")
    return SimilarityMatrix(tuple(labels), values)
