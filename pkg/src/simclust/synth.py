"""Deterministic synthetic embedding stores with planted super-cluster structure.

Geometry: super-cluster means sit at mutually equidistant simplex positions
(pairwise distance = super_separation), class means are drawn around their
super mean, vectors around their class mean. class_spread and intra_sigma
are RMS deviation *norms* (per-coordinate sigma is value / sqrt(dim)), so
they share units with super_separation and ratios like separation/sigma mean
the same thing in every dimension. Everything is then shifted by one
constant so all components are positive, imitating post-activation CNN
features where cosine distances live in [0, 1] territory.

The PCG64 generator behind numpy's default_rng makes generation a pure
function of the spec, including the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .similarity import CentroidSet, compute_centroids, cosine_distance
from .store import ClassEmbeddings, DatasetStore


@dataclass(frozen=True)
class SynthSpec:
    k_super: int = 2
    classes_per_super: int = 3
    dim: int = 8
    n_per_class: int = 20
    intra_sigma: float = 0.1
    class_spread: float = 0.5
    super_separation: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in ("k_super", "classes_per_super", "n_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if self.k_super > self.dim:
            raise ValidationError("need dim >= k_super to place equidistant super means")
        for name in ("intra_sigma", "class_spread", "super_separation"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        with open(path) as f:
            return cls(**json.load(f))


def generate(spec: SynthSpec) -> tuple[DatasetStore, dict[str, int]]:
    """Build the store and the class -> super-cluster ground truth."""
    rng = np.random.default_rng(spec.seed)

    # scaled standard-basis corners are mutually equidistant:
    # |s/sqrt(2) * (e_i - e_j)| = s for all i != j
    super_means = np.zeros((spec.k_super, spec.dim))
    for i in range(spec.k_super):
        super_means[i, i] = spec.super_separation / math.sqrt(2.0)

    spread_sd = spec.class_spread / math.sqrt(spec.dim)
    sigma_sd = spec.intra_sigma / math.sqrt(spec.dim)
    classes = []
    ground_truth: dict[str, int] = {}
    for si in range(spec.k_super):
        for ci in range(spec.classes_per_super):
            name = f"s{si}_c{ci}"
            class_mean = super_means[si] + spread_sd * rng.standard_normal(spec.dim)
            vectors = class_mean + sigma_sd * rng.standard_normal(
                (spec.n_per_class, spec.dim)
            )
            classes.append((name, vectors))
            ground_truth[name] = si

    low = min(float(v.min()) for _, v in classes)
    shift = max(0.0, 1e-3 * spec.super_separation - low)
    store = DatasetStore(
        dim=spec.dim,
        classes=tuple(
            ClassEmbeddings(name, (v + shift).astype(np.float32)) for name, v in classes
        ),
        source_tag=f"synth(seed={spec.seed})",
    )
    return store, ground_truth


def centroid_separation(
    centroids: CentroidSet, grouping: dict[str, int]
) -> tuple[float, float]:
    """(max within-group, min cross-group) pairwise centroid cosine distance.

    Degenerate cases with no pairs on a side report 0.0 within / inf across.
    """
    names = centroids.names
    intra_max, inter_min = 0.0, math.inf
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            d = cosine_distance(centroids.centroids[names[i]], centroids.centroids[names[j]])
            if grouping[names[i]] == grouping[names[j]]:
                intra_max = max(intra_max, d)
            else:
                inter_min = min(inter_min, d)
    return intra_max, inter_min


def measure_separation(
    store: DatasetStore, ground_truth: dict[str, int]
) -> tuple[float, float]:
    """centroid_separation of a store's class centroids under the planted grouping."""
    missing = set(store.class_names) ^ set(ground_truth)
    if missing:
        raise ValidationError(f"ground truth and store disagree on classes: {sorted(missing)}")
    return centroid_separation(compute_centroids(store), ground_truth)


def save_ground_truth(ground_truth: dict[str, int], path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(ground_truth, f, indent=2)
        f.write("\n")


def load_ground_truth(path: str | Path) -> dict[str, int]:
    with open(path) as f:
        return {str(k): int(v) for k, v in json.load(f).items()}
