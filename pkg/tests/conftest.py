import numpy as np
import pytest

from simclust.store import ClassEmbeddings, DatasetStore


def random_store(rng, n_classes=None, dim=None, n_per_class=None, positive=True):
    """Small random store; positive entries keep cosine geometry well-posed."""
    n_classes = n_classes or int(rng.integers(2, 8))
    dim = dim or int(rng.integers(2, 12))
    classes = []
    for i in range(n_classes):
        n = n_per_class or int(rng.integers(1, 6))
        low = 0.05 if positive else -1.0
        vecs = rng.uniform(low, 1.0, size=(n, dim)).astype(np.float32)
        classes.append(ClassEmbeddings(f"class_{i}", vecs))
    return DatasetStore(dim, tuple(classes), source_tag="test")


def partition_of(assignments):
    """Cluster-label-free view of a split: a set of frozen class-name groups."""
    groups = {}
    for name, cid in assignments.items():
        groups.setdefault(cid, set()).add(name)
    return frozenset(frozenset(g) for g in groups.values())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
