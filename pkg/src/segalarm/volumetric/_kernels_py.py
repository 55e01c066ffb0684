"""Pure-NumPy implementations of the voxel kernels.

This module mirrors the API of the compiled `_kernels` extension and is the
fallback selected at import time when the extension is unavailable. Both
backends must agree exactly on label outputs (the mapping is integral) and to
float64 round-off on the dice sums.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def affine_nearest_u8(src: np.ndarray, matrix: np.ndarray, offset: np.ndarray,
                      out_shape: tuple[int, int, int], fill: int = 0) -> np.ndarray:
    """Nearest-neighbor gather of a u8 label volume under an affine index map.

    For every output index vector ``o``, the source position is
    ``s = matrix @ o + offset``, rounded per axis with floor(s + 0.5).
    Out-of-bounds positions produce ``fill``.
    """
    src = np.ascontiguousarray(src, dtype=np.uint8)
    matrix = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
    offset = np.asarray(offset, dtype=np.float64).reshape(3)
    nx, ny, nz = (int(n) for n in out_shape)

    if not matrix[~np.eye(3, dtype=bool)].any():
        # Diagonal map: axes are independent, gather via per-axis index vectors.
        idx = []
        ok = []
        for a, n in enumerate((nx, ny, nz)):
            s = matrix[a, a] * np.arange(n, dtype=np.float64) + offset[a]
            i = np.floor(s + 0.5).astype(np.int64)
            ok.append((i >= 0) & (i < src.shape[a]))
            idx.append(np.clip(i, 0, src.shape[a] - 1))
        out = src[np.ix_(*idx)].copy()
        inside = ok[0][:, None, None] & ok[1][None, :, None] & ok[2][None, None, :]
        out[~inside] = fill
        return out

    grid = np.indices((nx, ny, nz), dtype=np.float64).reshape(3, -1)
    pos = matrix @ grid + offset[:, None]
    idx = np.floor(pos + 0.5).astype(np.int64)
    inside = np.ones(idx.shape[1], dtype=bool)
    for a in range(3):
        inside &= (idx[a] >= 0) & (idx[a] < src.shape[a])
        np.clip(idx[a], 0, src.shape[a] - 1, out=idx[a])
    out = src[idx[0], idx[1], idx[2]]
    out[~inside] = fill
    return out.reshape(nx, ny, nz)


def label_overlap_counts(a: np.ndarray, b: np.ndarray, num_classes: int) -> np.ndarray:
    """Joint label histogram: counts[ca, cb] = #voxels with a==ca and b==cb."""
    a = np.asarray(a, dtype=np.uint8).ravel()
    b = np.asarray(b, dtype=np.uint8).ravel()
    if a.shape != b.shape:
        raise ValueError("label volumes must have the same size")
    if a.size and max(int(a.max()), int(b.max())) >= num_classes:
        raise ValueError("label out of range for num_classes")
    joint = a.astype(np.int64) * num_classes + b
    counts = np.bincount(joint, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def soft_dice_sums(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """One-pass sums for soft dice: (sum a*b, sum a*a, sum b*b) in float64."""
    a64 = np.asarray(a, dtype=np.float32).ravel().astype(np.float64)
    b64 = np.asarray(b, dtype=np.float32).ravel().astype(np.float64)
    if a64.shape != b64.shape:
        raise ValueError("soft volumes must have the same size")
    return float(a64 @ b64), float(a64 @ a64), float(b64 @ b64)
