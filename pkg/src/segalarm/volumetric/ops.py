"""Mask preprocessing and overlap measures.

Every operation is a pure function of its inputs; augmentation randomness
comes only from the seed passed in. All label resampling is nearest-neighbor
so labels stay integral.
"""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple, Union

import numpy as np

from ..errors import EmptyMaskError
from .kernels import affine_nearest_u8, label_overlap_counts, soft_dice_sums
from .mask import PreprocessConfig, SoftMask, VolumetricMask

MaskLike = Union[VolumetricMask, SoftMask]


def resample_isotropic(mask: VolumetricMask, target_spacing_mm: float) -> VolumetricMask:
    """Resample a mask onto an isotropic grid of ``target_spacing_mm``.

    Output dims are ``round(dim * spacing / target)`` (clamped to >= 1) and
    labels are assigned by nearest-neighbor lookup of voxel centers.
    """
    t = float(target_spacing_mm)
    if t <= 0:
        raise ValueError(f"target spacing must be positive, got {target_spacing_mm}")
    out_dims = tuple(max(1, round(d * s / t)) for d, s in zip(mask.dims, mask.spacing))
    matrix = np.diag([t / s for s in mask.spacing])
    offset = np.array([0.5 * t / s - 0.5 for s in mask.spacing])
    data = affine_nearest_u8(mask.data, matrix, offset, out_dims)
    return VolumetricMask(data, (t, t, t), mask.num_classes)


def crop_to_centroid_cube(mask: VolumetricMask, cube_size: int) -> VolumetricMask:
    """Crop the smallest foreground-covering cube at the centroid, then
    resize it to ``cube_size`` per side (nearest-neighbor).

    The window is centered on the foreground centroid and padded with
    background where it extends past the grid. Output spacing is the
    cube-relative voxel size (informational only).
    """
    if cube_size < 1:
        raise ValueError(f"cube_size must be >= 1, got {cube_size}")
    fg = np.argwhere(mask.data > 0)
    if fg.size == 0:
        raise EmptyMaskError("cannot crop a mask with no foreground")
    centroid = fg.mean(axis=0)
    half = float(np.maximum(centroid - fg.min(axis=0), fg.max(axis=0) - centroid).max())
    side = int(math.ceil(2.0 * half)) + 1
    lo = np.floor(centroid - side / 2.0 + 0.5)

    scale = side / cube_size
    matrix = np.diag([scale] * 3)
    offset = lo + 0.5 * scale - 0.5
    data = affine_nearest_u8(mask.data, matrix, offset, (cube_size,) * 3)

    if not data.any():
        # Nearest-neighbor subsampling can skip every foreground voxel when the
        # window is much larger than the cube; keep the presence guarantee by
        # stamping the foreground voxel closest to the centroid.
        v = fg[np.argmin(((fg - centroid) ** 2).sum(axis=1))]
        o = np.floor((v - lo) / scale + 0.5).astype(int)
        o = np.clip(o, 0, cube_size - 1)
        data[tuple(o)] = mask.data[tuple(v)]

    spacing = tuple(scale * s for s in mask.spacing)
    return VolumetricMask(data, spacing, mask.num_classes)


def _axis_rotation(angle_deg: float, axis: int) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    m = np.eye(3)
    i, j = [(1, 2), (0, 2), (0, 1)][axis]
    m[i, i] = c
    m[j, j] = c
    m[i, j] = -s if axis != 1 else s
    m[j, i] = s if axis != 1 else -s
    return m


def rotation_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """Composed rotation, x applied first: R = Rz @ Ry @ Rx (degrees)."""
    return _axis_rotation(rz, 2) @ _axis_rotation(ry, 1) @ _axis_rotation(rx, 0)


def rotate_translate(mask: VolumetricMask, angles_deg: tuple[float, float, float],
                     translation: tuple[int, int, int]) -> VolumetricMask:
    """Rotate about the grid center, then translate by whole voxels.

    Nearest-neighbor with background fill; the zero rotation/translation is
    voxel-exact.
    """
    rot = rotation_matrix(*angles_deg)
    center = (np.array(mask.dims, dtype=np.float64) - 1.0) / 2.0
    t = np.asarray(translation, dtype=np.float64)
    inv = rot.T
    offset = center - inv @ (center + t)
    data = affine_nearest_u8(mask.data, inv, offset, mask.dims)
    return mask.with_data(data)


def augment(mask: VolumetricMask, config: PreprocessConfig, seed: int) -> list[VolumetricMask]:
    """All |rotation_degrees|^3 rotation variants, each with a seeded random
    integer translation in [-max_translation_voxels, +max_translation_voxels].
    """
    rng = np.random.default_rng(seed)
    m = config.max_translation_voxels
    out = []
    for angles in itertools.product(config.rotation_degrees, repeat=3):
        t = rng.integers(-m, m + 1, size=3)
        out.append(rotate_translate(mask, angles, tuple(int(v) for v in t)))
    return out


def random_augment(mask: VolumetricMask, config: PreprocessConfig,
                   rng: np.random.Generator) -> VolumetricMask:
    """One augmentation draw: a random rotation triple and translation.

    Statistically equivalent to sampling from `augment`'s output without
    materializing all variants; used by the training loop.
    """
    angles = tuple(rng.choice(config.rotation_degrees) for _ in range(3))
    m = config.max_translation_voxels
    t = rng.integers(-m, m + 1, size=3)
    return rotate_translate(mask, angles, tuple(int(v) for v in t))


def one_hot_encode(mask: VolumetricMask) -> SoftMask:
    """Indicator channels for each foreground class (background gets none)."""
    channels = np.stack([(mask.data == c).astype(np.float32)
                         for c in range(1, mask.num_classes)])
    return SoftMask(channels, mask.spacing)


def argmax_decode(soft: SoftMask, threshold: float = 0.5) -> VolumetricMask:
    """Inverse of one-hot encoding: argmax channel where any channel clears
    the threshold, else background."""
    labels = (soft.data.argmax(axis=0) + 1).astype(np.uint8)
    labels[soft.data.max(axis=0) < threshold] = 0
    return VolumetricMask(labels, soft.spacing, soft.num_classes)


class DiceByClass(NamedTuple):
    per_class: tuple[float, ...]
    mean: float


def _check_same_grid(a: MaskLike, b: MaskLike):
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    if a.num_classes != b.num_classes:
        raise ValueError(f"class count mismatch: {a.num_classes} vs {b.num_classes}")


def _soft_dice_from_sums(sab: float, saa: float, sbb: float) -> float:
    if saa + sbb == 0.0:
        return 1.0  # both empty: perfect agreement by convention
    return 2.0 * sab / (saa + sbb)


def dice_coefficient(a: MaskLike, b: MaskLike) -> float:
    """Soft Dice overlap 2*sum(ab) / (sum(a^2) + sum(b^2)) in [0, 1].

    Label masks enter as foreground indicators (any class > 0); soft masks
    contribute all channels. Empty vs empty is 1.0, empty vs non-empty 0.0.
    """
    _check_same_grid(a, b)
    if isinstance(a, VolumetricMask) and isinstance(b, VolumetricMask):
        counts = label_overlap_counts(a.data, b.data, a.num_classes)
        inter = float(counts[1:, 1:].sum())
        na = float(counts[1:, :].sum())
        nb = float(counts[:, 1:].sum())
        return _soft_dice_from_sums(inter, na, nb)
    sa = a.data if isinstance(a, SoftMask) else one_hot_encode(a).data
    sb = b.data if isinstance(b, SoftMask) else one_hot_encode(b).data
    return _soft_dice_from_sums(*soft_dice_sums(sa, sb))


def multiclass_dice(a: MaskLike, b: MaskLike, num_classes: int) -> DiceByClass:
    """Per-foreground-class Dice plus the mean over foreground classes."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if a.num_classes != num_classes or b.num_classes != num_classes:
        raise ValueError("num_classes does not match the inputs")
    _check_same_grid(a, b)
    if isinstance(a, VolumetricMask) and isinstance(b, VolumetricMask):
        counts = label_overlap_counts(a.data, b.data, num_classes)
        per_class = tuple(
            _soft_dice_from_sums(float(counts[c, c]),
                                 float(counts[c, :].sum()),
                                 float(counts[:, c].sum()))
            for c in range(1, num_classes))
    else:
        sa = a.data if isinstance(a, SoftMask) else one_hot_encode(a).data
        sb = b.data if isinstance(b, SoftMask) else one_hot_encode(b).data
        per_class = tuple(
            _soft_dice_from_sums(*soft_dice_sums(sa[c], sb[c]))
            for c in range(num_classes - 1))
    return DiceByClass(per_class, float(np.mean(per_class)))
