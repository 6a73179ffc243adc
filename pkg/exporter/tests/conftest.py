import numpy as np
import pytest
from PIL import Image


def make_image_tree(root, classes=("tulip", "rose"), per_class=3, size=96, seed=0):
    """Tiny folder tree of random RGB PNGs, one subfolder per class."""
    rng = np.random.default_rng(seed)
    for name in classes:
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(per_class):
            pixels = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(folder / f"img_{i}.png")
    return root


@pytest.fixture
def toy_images(tmp_path):
    return make_image_tree(tmp_path / "images")
