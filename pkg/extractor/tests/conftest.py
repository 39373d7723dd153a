import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def tiny_imagenette(tmp_path_factory):
    """Two-class Imagenette-layout tree of small random images."""
    root = tmp_path_factory.mktemp("imgset")
    rng = np.random.default_rng(0)
    for split, per_class in (("train", 4), ("val", 2)):
        for cls in ("n_fish", "n_horn"):
            d = root / split / cls
            d.mkdir(parents=True)
            for i in range(per_class):
                pixels = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
                Image.fromarray(pixels).save(d / f"{i}.png")
    return root
