"""Classifier heads evaluated directly on feature vectors.

Two kinds: a nearest-centroid head (simple enough to check against exhaustive
oracles) and a linear softmax head trained by full-batch gradient descent on
multinomial cross-entropy with a step learning-rate schedule,

    lr(epoch) = lr0 * gamma ** (epoch // step_size)

Weights start at zero, which is deterministic and sufficient for a convex
problem; the config seed is reserved for optional mini-batching and does not
affect full-batch training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .similarity import CentroidSet, cosine_distance
from .store import ClassEmbeddings


@dataclass(frozen=True)
class NearestCentroidHead:
    centroids: CentroidSet

    @property
    def classes(self) -> list[str]:
        return self.centroids.names

    @property
    def dim(self) -> int:
        return self.centroids.dim

    def predict(self, query: np.ndarray) -> str:
        return nc_predict(self, query)


@dataclass
class TrainConfig:
    epochs: int = 200
    lr0: float = 0.1
    step_size: int = 30
    gamma: float = 0.1
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.step_size < 1:
            raise ValidationError("step_size must be >= 1")
        if self.lr0 <= 0:
            raise ValidationError("lr0 must be positive")
        if not 0 < self.gamma <= 1:
            raise ValidationError("gamma must be in (0, 1]")
        if self.l2 < 0:
            raise ValidationError("l2 must be nonnegative")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.gamma ** (epoch // self.step_size)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr0": self.lr0,
            "step_size": self.step_size,
            "gamma": self.gamma,
            "l2": self.l2,
            "seed": self.seed,
        }


@dataclass
class LinearHead:
    """Softmax classifier: class scores are W @ q + b, rows ordered like classes."""

    classes: list[str]
    W: np.ndarray
    b: np.ndarray
    trained_epochs: int = 0
    config: TrainConfig | None = None
    loss_history: list[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        c = len(self.classes)
        if self.W.ndim != 2 or self.W.shape[0] != c or self.b.shape != (c,):
            raise ValidationError(
                f"parameter shapes {self.W.shape}/{self.b.shape} do not match {c} classes"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValidationError("head parameters must be finite")

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def predict(self, query: np.ndarray) -> str:
        return linear_predict(self, query)[0]


def nc_predict(head: NearestCentroidHead, query: np.ndarray) -> str:
    """Class whose centroid is nearest in cosine distance; ties keep the
    earliest class in order."""
    query = np.asarray(query, dtype=np.float64)
    best_name, best_d = None, np.inf
    for name, c in head.centroids.centroids.items():
        d = cosine_distance(query, c)
        if d < best_d:
            best_name, best_d = name, d
    return best_name


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):  # inf logits propagate NaN to the guard
        shifted = logits - logits.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def linear_predict(head: LinearHead, query: np.ndarray) -> tuple[str, np.ndarray]:
    """(argmax class, softmax probabilities in class order)."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (head.dim,):
        raise ValidationError(f"query shape {query.shape}, head expects ({head.dim},)")
    probs = np.exp(_log_softmax(head.W @ query + head.b))
    return head.classes[int(np.argmax(probs))], probs


def train_linear_head(data: list[ClassEmbeddings], cfg: TrainConfig) -> LinearHead:
    """Full-batch gradient descent on mean cross-entropy (+ optional L2 on W).

    Deterministic for a given config; loss is recorded per epoch before the
    update, so loss_history[0] is the zero-init loss ln(C).
    """
    if len(data) < 2:
        raise ValidationError("training needs at least 2 classes")
    dims = {c.dim for c in data}
    if len(dims) != 1:
        raise ValidationError(f"classes disagree on dim: {sorted(dims)}")
    (d,) = dims

    classes = [c.class_name for c in data]
    X = np.concatenate([c.vectors.astype(np.float64) for c in data])
    y = np.concatenate([np.full(c.n, i, dtype=np.intp) for i, c in enumerate(data)])
    n, C = X.shape[0], len(classes)
    onehot = np.zeros((n, C), dtype=np.float64)
    onehot[np.arange(n), y] = 1.0

    W = np.zeros((C, d), dtype=np.float64)
    b = np.zeros(C, dtype=np.float64)
    history = []
    for epoch in range(cfg.epochs):
        logits = X @ W.T + b
        log_p = _log_softmax(logits)
        loss = -float(log_p[np.arange(n), y].mean())
        if cfg.l2 > 0:
            loss += 0.5 * cfg.l2 * float(np.sum(W * W))
        if not np.isfinite(loss):
            raise ValidationError(f"training diverged: non-finite loss at epoch {epoch}")
        history.append(loss)

        residual = (np.exp(log_p) - onehot) / n
        grad_W = residual.T @ X
        if cfg.l2 > 0:
            grad_W += cfg.l2 * W
        grad_b = residual.sum(axis=0)
        lr = cfg.lr_at(epoch)
        with np.errstate(over="ignore", invalid="ignore"):  # NaN guard handles divergence
            W -= lr * grad_W
            b -= lr * grad_b

    final_log_p = _log_softmax(X @ W.T + b)
    final = -float(final_log_p[np.arange(n), y].mean())
    if cfg.l2 > 0:
        final += 0.5 * cfg.l2 * float(np.sum(W * W))
    if not np.isfinite(final):
        raise ValidationError(f"training diverged: non-finite loss after epoch {cfg.epochs - 1}")
    history.append(final)

    return LinearHead(classes, W, b, trained_epochs=cfg.epochs, config=cfg, loss_history=history)


HEAD_KINDS = ("nearest_centroid", "linear")


def fit_head(
    kind: str, data: list[ClassEmbeddings], cfg: TrainConfig | None = None
) -> LinearHead | NearestCentroidHead:
    """Train a head of the requested kind on per-class embeddings."""
    if kind == "nearest_centroid":
        from .similarity import compute_centroid

        dims = {c.dim for c in data}
        if len(dims) != 1:
            raise ValidationError(f"classes disagree on dim: {sorted(dims)}")
        return NearestCentroidHead(
            CentroidSet(dims.pop(), {c.class_name: compute_centroid(c) for c in data})
        )
    if kind == "linear":
        return train_linear_head(data, cfg or TrainConfig())
    raise ValidationError(f"head kind must be one of {HEAD_KINDS}, got {kind!r}")


def ce_loss_and_grads(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and analytic gradients at (W, b); exposed for gradient checking."""
    n = X.shape[0]
    log_p = _log_softmax(X @ W.T + b)
    loss = -float(log_p[np.arange(n), y].mean()) + 0.5 * l2 * float(np.sum(W * W))
    onehot = np.zeros_like(log_p)
    onehot[np.arange(n), y] = 1.0
    residual = (np.exp(log_p) - onehot) / n
    return loss, residual.T @ X + l2 * W, residual.sum(axis=0)


# ---------------------------------------------------------------------------
# Head files. Linear heads use the JSON layout below; nearest-centroid heads
# store their centroid rows under "centroids" instead of W/b. json.dump
# serializes floats at full round-trip precision.


def save_head(head: LinearHead | NearestCentroidHead, path: str | Path) -> None:
    if isinstance(head, LinearHead):
        doc = {
            "classes": list(head.classes),
            "W": head.W.tolist(),
            "b": head.b.tolist(),
            "trained_epochs": head.trained_epochs,
            "config": head.config.to_dict() if head.config else {},
        }
    else:
        doc = {
            "kind": "nearest_centroid",
            "classes": head.classes,
            "centroids": [head.centroids.centroids[n].tolist() for n in head.classes],
        }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_head(path: str | Path) -> LinearHead | NearestCentroidHead:
    with open(path) as f:
        doc = json.load(f)
    if "classes" not in doc:
        raise FormatError(f"{path}: head file missing 'classes'")
    if "W" in doc:
        cfg = TrainConfig(**doc["config"]) if doc.get("config") else None
        return LinearHead(
            classes=list(doc["classes"]),
            W=np.array(doc["W"], dtype=np.float64),
            b=np.array(doc["b"], dtype=np.float64),
            trained_epochs=int(doc.get("trained_epochs", 0)),
            config=cfg,
        )
    if doc.get("kind") == "nearest_centroid":
        rows = np.array(doc["centroids"], dtype=np.float64)
        names = list(doc["classes"])
        return NearestCentroidHead(
            CentroidSet(rows.shape[1], dict(zip(names, rows)))
        )
    raise FormatError(f"{path}: unrecognized head file")
