"""Core volumetric data types: labeled masks, soft (probabilistic) masks,
and the preprocessing configuration shared by the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class VolumetricMask:
    """A labeled 3D voxel grid with physical spacing.

    ``data`` holds small non-negative integer class labels (0 = background)
    in an array indexed ``[x, y, z]``. ``spacing`` is millimeters per voxel
    along each axis.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    num_classes: int = 2

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3:
            raise ValueError(f"mask data must be 3D, got {self.data.ndim}D")
        if any(d < 1 for d in self.data.shape):
            raise ValueError(f"mask dims must be >= 1, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive reals, got {self.spacing}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.data.size and int(self.data.max()) >= self.num_classes:
            raise ValueError(
                f"label {int(self.data.max())} out of range for "
                f"num_classes={self.num_classes}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.data))

    @property
    def is_empty(self) -> bool:
        return self.foreground_count == 0

    def copy(self) -> "VolumetricMask":
        return VolumetricMask(self.data.copy(), self.spacing, self.num_classes)

    def with_data(self, data: np.ndarray) -> "VolumetricMask":
        return VolumetricMask(data, self.spacing, self.num_classes)


@dataclass
class SoftMask:
    """Per-class foreground probabilities in [0, 1].

    ``data`` has shape ``(num_foreground_classes, nx, ny, nz)``; background
    carries no channel (it is one minus the channel sum for valid inputs).
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ValueError(f"soft mask data must be 4D, got {self.data.ndim}D")
        if self.data.size:
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"soft mask values must lie in [0,1], got [{lo}, {hi}]")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def num_foreground_classes(self) -> int:
        return self.data.shape[0]

    @property
    def num_classes(self) -> int:
        return self.data.shape[0] + 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


@dataclass
class PreprocessConfig:
    """Geometry defaults for resampling, cropping and augmentation.

    ``cube_size`` must be a power of two so the encoder's stride-2 chain
    divides it evenly. 128 matches the production setting; 32 is the
    desk-scale default used by the synthetic bench.
    """

    target_spacing_mm: float = 1.0
    cube_size: int = 128
    rotation_degrees: tuple[float, ...] = (-10.0, 0.0, 10.0)
    max_translation_voxels: int = 5

    def __post_init__(self):
        if self.target_spacing_mm <= 0:
            raise ValueError("target_spacing_mm must be positive")
        if not _is_power_of_two(self.cube_size):
            raise ValueError(f"cube_size must be a power of two, got {self.cube_size}")
        self.rotation_degrees = tuple(float(r) for r in self.rotation_degrees)
        if not self.rotation_degrees:
            raise ValueError("rotation_degrees must not be empty")
        if self.max_translation_voxels < 0:
            raise ValueError("max_translation_voxels must be >= 0")
