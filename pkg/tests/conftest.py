import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segalarm.volumetric import VolumetricMask


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_label_mask(rng, dims=(16, 16, 16), num_classes=2, fg_prob=0.3,
                      spacing=(1.0, 1.0, 1.0)):
    labels = rng.integers(1, num_classes, size=dims, dtype=np.uint8)
    labels[rng.random(dims) >= fg_prob] = 0
    return VolumetricMask(labels, spacing, num_classes)


def solid_cube_mask(grid=32, lo=8, hi=24, spacing=(1.0, 1.0, 1.0), label=1,
                    num_classes=2):
    data = np.zeros((grid,) * 3, dtype=np.uint8)
    data[lo:hi, lo:hi, lo:hi] = label
    return VolumetricMask(data, spacing, num_classes)
