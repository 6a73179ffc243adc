"""Embedding store: FVEC1 vector files, dataset manifests, cluster split files.

On-disk formats
---------------
FVEC1 binary::

    magic   5 bytes   b"FVEC1"
    dim     u32 LE
    count   u32 LE
    data    count * dim float32 LE, row-major

Manifest JSON::

    {"dim": int,
     "classes": [{"name": str, "file": relative path, "count": int}, ...],
     "source_tag": str}

Split JSON::

    {"k": int, "linkage": "ward",
     "assignments": {class_name: cluster_id},
     "merge_heights": [float, ...] | null}

Vectors are stored as float32 (compact, matches common extractor output);
everything downstream promotes to float64 before doing arithmetic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"FVEC1"
HEADER_SIZE = len(MAGIC) + 8  # magic + u32 dim + u32 count


@dataclass(frozen=True)
class ClassEmbeddings:
    """All feature vectors of one class: an (n_i, d) float32 matrix."""

    class_name: str
    vectors: np.ndarray

    def __post_init__(self):
        if not self.class_name:
            raise ValidationError("class_name must be nonempty")
        vecs = np.asarray(self.vectors, dtype=np.float32)
        if vecs.ndim != 2 or vecs.shape[0] < 1 or vecs.shape[1] < 1:
            raise ValidationError(
                f"class {self.class_name!r}: vectors must be a nonempty 2-d matrix"
            )
        if not np.all(np.isfinite(vecs)):
            raise ValidationError(f"class {self.class_name!r}: non-finite embedding value")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class DatasetStore:
    """Ordered collection of per-class embeddings with a shared dimension.

    Class order is canonical: similarity-matrix rows, split files and
    centroid files all follow it.
    """

    dim: int
    classes: tuple[ClassEmbeddings, ...]
    source_tag: str = ""

    def __post_init__(self):
        classes = tuple(self.classes)
        if not classes:
            raise ValidationError("store must contain at least one class")
        names = [c.class_name for c in classes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate class names: {dupes}")
        for c in classes:
            if c.dim != self.dim:
                raise ValidationError(
                    f"class {c.class_name!r} has dim {c.dim}, store dim is {self.dim}"
                )
        object.__setattr__(self, "classes", classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> list[str]:
        return [c.class_name for c in self.classes]

    def class_by_name(self, name: str) -> ClassEmbeddings:
        for c in self.classes:
            if c.class_name == name:
                return c
        raise KeyError(name)

    def with_class(self, new_class: ClassEmbeddings) -> "DatasetStore":
        """New store with one class appended (used by the extension workflow)."""
        if new_class.class_name in self.class_names:
            raise ValidationError(f"class {new_class.class_name!r} already in store")
        return DatasetStore(self.dim, self.classes + (new_class,), self.source_tag)


@dataclass(frozen=True)
class ClusterSplit:
    """Partition of class names into k clusters, ids in [0, k)."""

    k: int
    assignments: dict[str, int]
    linkage: str = "ward"
    merge_heights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        seen: set[int] = set()
        for name, cid in self.assignments.items():
            if not (0 <= cid < self.k):
                raise ValidationError(
                    f"class {name!r} has cluster id {cid} outside [0, {self.k})"
                )
            seen.add(cid)
        if seen != set(range(self.k)):
            empty = sorted(set(range(self.k)) - seen)
            raise ValidationError(f"empty clusters: {empty}")
        if self.merge_heights is not None:
            object.__setattr__(self, "merge_heights", tuple(float(h) for h in self.merge_heights))

    def members(self, cluster_id: int) -> list[str]:
        """Class names of one cluster, in assignment (canonical) order."""
        return [n for n, c in self.assignments.items() if c == cluster_id]

    def sizes(self) -> list[int]:
        return [len(self.members(c)) for c in range(self.k)]


# ---------------------------------------------------------------------------
# FVEC1 binary format


def save_fvec(vectors: np.ndarray, path: str | Path) -> None:
    """Write vectors to an FVEC1 file. Deterministic: same input, same bytes."""
    try:
        arr = np.asarray(vectors)
    except ValueError:
        raise ValidationError("ragged rows: all vectors must have the same length") from None
    if arr.dtype == object:
        raise ValidationError("ragged rows: all vectors must have the same length")
    arr = arr.astype(np.float32, copy=False)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError("need a nonempty 2-d array of vectors")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("non-finite value; FVEC1 stores finite floats only")
    count, dim = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", dim, count))
        f.write(payload)


def load_fvec(path: str | Path) -> tuple[int, np.ndarray]:
    """Read an FVEC1 file, returning (dim, (count, dim) float32 array)."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an FVEC1 file", offset=0)
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header", offset=len(blob))
    dim, count = struct.unpack_from("<II", blob, len(MAGIC))
    if dim == 0:
        raise FormatError(f"{path}: dim is zero", offset=len(MAGIC))
    if count == 0:
        raise FormatError(f"{path}: count is zero", offset=len(MAGIC) + 4)
    expected = HEADER_SIZE + 4 * dim * count
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob) - HEADER_SIZE} bytes, "
            f"expected {4 * dim * count} for {count} x {dim} float32",
            offset=len(blob),
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(count, dim)
    finite = np.isfinite(arr).ravel()
    if not finite.all():
        bad = int(np.argmin(finite))
        raise FormatError(
            f"{path}: non-finite float at element {bad}",
            offset=HEADER_SIZE + 4 * bad,
        )
    out = arr.astype(np.float32)  # copy out of the read-only buffer
    out.setflags(write=False)
    return int(dim), out


# ---------------------------------------------------------------------------
# Manifest JSON


def save_store(store: DatasetStore, manifest_path: str | Path, *, vectors_dirname: str = "classes") -> Path:
    """Write manifest + one FVEC file per class next to the manifest."""
    manifest_path = Path(manifest_path)
    vec_dir = manifest_path.parent / vectors_dirname
    vec_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for c in store.classes:
        fname = f"{_safe_filename(c.class_name)}.fvec"
        save_fvec(c.vectors, vec_dir / fname)
        entries.append({"name": c.class_name, "file": f"{vectors_dirname}/{fname}", "count": c.n})
    manifest = {"dim": store.dim, "classes": entries, "source_tag": store.source_tag}
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest_path


def load_store(manifest_path: str | Path) -> DatasetStore:
    """Load and fully validate a store from its manifest."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    for key in ("dim", "classes"):
        if key not in manifest:
            raise FormatError(f"{manifest_path}: manifest missing key {key!r}")
    dim = int(manifest["dim"])
    classes = []
    for entry in manifest["classes"]:
        name = entry["name"]
        fdim, vecs = load_fvec(manifest_path.parent / entry["file"])
        if fdim != dim:
            raise ValidationError(
                f"class {name!r}: file dim {fdim} does not match manifest dim {dim}"
            )
        if vecs.shape[0] != int(entry["count"]):
            raise ValidationError(
                f"class {name!r}: manifest declares {entry['count']} vectors, "
                f"file holds {vecs.shape[0]}"
            )
        classes.append(ClassEmbeddings(name, vecs))
    return DatasetStore(dim, tuple(classes), manifest.get("source_tag", ""))


def _safe_filename(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


# ---------------------------------------------------------------------------
# Split JSON


def save_split(split: ClusterSplit, path: str | Path) -> None:
    doc = {
        "k": split.k,
        "linkage": split.linkage,
        "assignments": split.assignments,
        "merge_heights": list(split.merge_heights) if split.merge_heights is not None else None,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_split(path: str | Path) -> ClusterSplit:
    with open(path) as f:
        doc = json.load(f)
    for key in ("k", "assignments"):
        if key not in doc:
            raise FormatError(f"{path}: split file missing key {key!r}")
    if not doc["assignments"]:
        raise ValidationError(f"{path}: split has no classes")
    assignments = {str(name): int(cid) for name, cid in doc["assignments"].items()}
    heights = doc.get("merge_heights")
    return ClusterSplit(
        k=int(doc["k"]),
        assignments=assignments,
        linkage=str(doc.get("linkage", "ward")),
        merge_heights=tuple(heights) if heights is not None else None,
    )
