"""Split fixtures shipped with the package.

The Oxford Flowers files are real k=2 / k=3 class-cluster splits of the
102-species dataset in the standard split JSON format. Stanford Dogs ships
as cluster-size expectations only (no per-class table is available).
"""

from __future__ import annotations

import json
from importlib.resources import files
from pathlib import Path

from .store import ClusterSplit, load_split


def fixture_path(name: str) -> Path:
    return Path(str(files("simclust").joinpath("fixtures", name)))


def oxford_two_split() -> ClusterSplit:
    return load_split(fixture_path("oxford_flowers_two_split.json"))


def oxford_three_split() -> ClusterSplit:
    return load_split(fixture_path("oxford_flowers_three_split.json"))


def stanford_expected_sizes() -> dict:
    with open(fixture_path("stanford_dogs_expected_sizes.json")) as f:
        return json.load(f)
