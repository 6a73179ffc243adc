"""Writers for the embedding-store wire formats the clustering pipeline reads.

Deliberately implemented here from the documented interface rather than
imported from the pipeline package, so the exporter stands alone and the
formats themselves are the only coupling.

FVEC1: magic b"FVEC1", u32 LE dim, u32 LE count, count*dim float32 LE,
row-major, no padding. Manifest: {"dim", "classes": [{"name", "file",
"count"}], "source_tag"} with file paths relative to the manifest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FVEC1"


def save_fvec(vectors: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("need a nonempty 2-d array of vectors")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite embedding value")
    count, dim = arr.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", dim, count))
        f.write(arr.tobytes())


def safe_filename(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def write_manifest(
    dim: int, entries: list[dict], source_tag: str, path: str | Path
) -> None:
    doc = {"dim": dim, "classes": entries, "source_tag": source_tag}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
