"""Measure the clustered pipeline: routing accuracy, per-cluster and
end-to-end top-1, the monolithic baseline, and the add-one-class extension
workflow that retrains a single cluster head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, routing
from .errors import ValidationError
from .heads import LinearHead, NearestCentroidHead, TrainConfig, fit_head
from .similarity import CentroidSet, compute_centroid
from .store import ClassEmbeddings, ClusterSplit, DatasetStore
from .synth import centroid_separation

Head = LinearHead | NearestCentroidHead
TestSet = list[tuple[np.ndarray, str]]


def split_train_test(
    store: DatasetStore, test_fraction: float, seed: int
) -> tuple[DatasetStore, TestSet]:
    """Per-class stratified split; every class keeps at least one training
    vector. Deterministic under the seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_classes = []
    test_set: TestSet = []
    for c in store.classes:
        n_test = int(c.n * test_fraction + 0.5)
        if c.n - n_test < 1:
            raise ValidationError(
                f"class {c.class_name!r} too small to split: {c.n} vectors, "
                f"{n_test} requested for test"
            )
        perm = rng.permutation(c.n)
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
        train_classes.append(ClassEmbeddings(c.class_name, c.vectors[train_idx]))
        for i in test_idx:
            test_set.append((c.vectors[i], c.class_name))
    return DatasetStore(store.dim, tuple(train_classes), store.source_tag), test_set


@dataclass
class PipelineArtifacts:
    """Everything the inference path needs, as produced by the training stages."""

    split: ClusterSplit
    centroids: CentroidSet
    heads: dict[int, Head]
    monolithic: Head
    aggregate_mode: str = "mean"

    def cluster_centroids(self) -> dict[int, CentroidSet]:
        return clustering.cluster_centroid_sets(self.split, self.centroids)


@dataclass
class EvalReport:
    routing_accuracy: float
    end_to_end_top1: float
    monolithic_top1: float
    per_cluster_top1: dict[int, float]
    n_eval: int
    separation: tuple[float, float]  # (intra_max, inter_min)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "routing_accuracy": self.routing_accuracy,
            "end_to_end_top1": self.end_to_end_top1,
            "monolithic_top1": self.monolithic_top1,
            "per_cluster_top1": {str(c): a for c, a in self.per_cluster_top1.items()},
            "n_eval": self.n_eval,
            "separation": {"intra_max": self.separation[0], "inter_min": self.separation[1]},
            "notes": self.notes,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def evaluate(artifacts: PipelineArtifacts, test_set: TestSet) -> EvalReport:
    """Score every test vector through routing, the routed head, the
    oracle-routed home head, and the monolithic baseline."""
    if not test_set:
        raise ValidationError("empty test set")
    missing = [cid for cid in range(artifacts.split.k) if cid not in artifacts.heads]
    if missing:
        raise ValidationError(f"no head for clusters {missing}")
    unknown = sorted({name for _, name in test_set} - set(artifacts.split.assignments))
    if unknown:
        raise ValidationError(f"test classes missing from split: {unknown}")

    by_cluster = artifacts.cluster_centroids()
    routed_ok = 0
    end_to_end_ok = 0
    mono_ok = 0
    per_cluster = {cid: [0, 0] for cid in range(artifacts.split.k)}  # [correct, total]
    for vec, name in test_set:
        home = artifacts.split.assignments[name]
        predicted, decision = routing.predict_class(
            vec, artifacts.split, by_cluster, artifacts.heads, artifacts.aggregate_mode
        )
        routed_ok += decision.chosen_cluster == home
        end_to_end_ok += predicted == name
        mono_ok += artifacts.monolithic.predict(np.asarray(vec, dtype=np.float64)) == name
        stats = per_cluster[home]
        stats[0] += artifacts.heads[home].predict(np.asarray(vec, dtype=np.float64)) == name
        stats[1] += 1

    n = len(test_set)
    return EvalReport(
        routing_accuracy=routed_ok / n,
        end_to_end_top1=end_to_end_ok / n,
        monolithic_top1=mono_ok / n,
        per_cluster_top1={
            cid: correct / total for cid, (correct, total) in per_cluster.items() if total
        },
        n_eval=n,
        separation=centroid_separation(artifacts.centroids, artifacts.split.assignments),
    )


@dataclass
class ExtensionReport:
    class_name: str
    target_cluster: int
    retrained_classes: int
    total_classes: int

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "target_cluster": self.target_cluster,
            "retrained_classes": self.retrained_classes,
            "total_classes": self.total_classes,
        }


def extend_and_retrain(
    new_class: ClassEmbeddings,
    train_store: DatasetStore,
    artifacts: PipelineArtifacts,
    head_kind: str,
    cfg: TrainConfig | None = None,
) -> tuple[DatasetStore, PipelineArtifacts, ExtensionReport]:
    """Add one class: route it to its nearest cluster, retrain only that
    cluster's head. Every other head object is reused untouched."""
    if new_class.class_name in train_store.class_names:
        raise ValidationError(f"class {new_class.class_name!r} already exists")
    target = clustering.assign_new_class(new_class, artifacts.split, artifacts.centroids)

    new_store = train_store.with_class(new_class)
    assignments = dict(artifacts.split.assignments)
    assignments[new_class.class_name] = target
    # the old dendrogram no longer describes this class set
    new_split = ClusterSplit(k=artifacts.split.k, assignments=assignments, linkage="ward")

    centroids = dict(artifacts.centroids.centroids)
    centroids[new_class.class_name] = compute_centroid(new_class)
    new_centroids = CentroidSet(artifacts.centroids.dim, centroids)

    member_names = new_split.members(target)
    data = [new_store.class_by_name(n) for n in member_names]
    new_heads = dict(artifacts.heads)
    new_heads[target] = fit_head(head_kind, data, cfg)

    new_artifacts = PipelineArtifacts(
        split=new_split,
        centroids=new_centroids,
        heads=new_heads,
        monolithic=artifacts.monolithic,
        aggregate_mode=artifacts.aggregate_mode,
    )
    report = ExtensionReport(
        class_name=new_class.class_name,
        target_cluster=target,
        retrained_classes=len(member_names),
        total_classes=new_store.n_classes,
    )
    return new_store, new_artifacts, report
