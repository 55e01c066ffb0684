"""Backend parity: the compiled kernels and the NumPy fallback must agree."""

import numpy as np
import pytest

from segalarm.volumetric import _kernels_py
from segalarm.volumetric import kernels

try:
    from segalarm.volumetric import _kernels as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled kernels not built")


def test_backend_name_reports_selection():
    assert kernels.backend_name() in ("compiled", "numpy")


def _random_affine(rng):
    angle = rng.uniform(-0.3, 0.3)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    offset = rng.uniform(-2, 2, size=3)
    return rot, offset


@needs_compiled
def test_affine_gather_parity(rng):
    for _ in range(10):
        src = rng.integers(0, 4, size=(14, 11, 13), dtype=np.uint8)
        matrix, offset = _random_affine(rng)
        out_shape = (12, 12, 12)
        a = compiled.affine_nearest_u8(src, matrix, offset, out_shape)
        b = _kernels_py.affine_nearest_u8(src, matrix, offset, out_shape)
        np.testing.assert_array_equal(a, b)


@needs_compiled
def test_affine_gather_parity_diagonal(rng):
    # exercises the NumPy fast path for separable maps
    src = rng.integers(0, 3, size=(9, 9, 9), dtype=np.uint8)
    matrix = np.diag([0.5, 2.0, 1.0])
    offset = np.array([-0.25, 0.5, 0.0])
    a = compiled.affine_nearest_u8(src, matrix, offset, (18, 5, 9))
    b = _kernels_py.affine_nearest_u8(src, matrix, offset, (18, 5, 9))
    np.testing.assert_array_equal(a, b)


@needs_compiled
def test_fill_value_parity(rng):
    src = rng.integers(0, 2, size=(4, 4, 4), dtype=np.uint8)
    matrix = np.eye(3)
    offset = np.array([10.0, 0.0, 0.0])  # everything lands outside
    a = compiled.affine_nearest_u8(src, matrix, offset, (4, 4, 4), fill=7)
    b = _kernels_py.affine_nearest_u8(src, matrix, offset, (4, 4, 4), fill=7)
    np.testing.assert_array_equal(a, b)
    assert (a == 7).all()


@needs_compiled
def test_label_overlap_counts_parity(rng):
    a = rng.integers(0, 5, size=1000, dtype=np.uint8)
    b = rng.integers(0, 5, size=1000, dtype=np.uint8)
    ca = compiled.label_overlap_counts(a, b, 5)
    cb = _kernels_py.label_overlap_counts(a, b, 5)
    np.testing.assert_array_equal(ca, cb)
    assert ca.sum() == 1000


@needs_compiled
def test_soft_dice_sums_parity(rng):
    a = rng.random(5000, dtype=np.float32)
    b = rng.random(5000, dtype=np.float32)
    sa = compiled.soft_dice_sums(a, b)
    sb = _kernels_py.soft_dice_sums(a, b)
    assert sa == pytest.approx(sb, rel=1e-12)


@needs_compiled
def test_out_of_range_labels_rejected_by_both(rng):
    a = np.array([0, 1, 9], dtype=np.uint8)
    for impl in (compiled, _kernels_py):
        with pytest.raises(ValueError):
            impl.label_overlap_counts(a, a, 3)


def test_size_mismatch_rejected(rng):
    a = np.zeros(10, np.uint8)
    b = np.zeros(11, np.uint8)
    with pytest.raises(ValueError):
        kernels.label_overlap_counts(a, b, 2)
    with pytest.raises(ValueError):
        kernels.soft_dice_sums(a.astype(np.float32), b.astype(np.float32))
