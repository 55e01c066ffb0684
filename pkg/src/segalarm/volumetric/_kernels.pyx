# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled voxel kernels: nearest-neighbor affine gather over u8 label
volumes, joint label histograms, and fused soft-dice sums.

Must stay semantically identical to `_kernels_py` (same rounding rule,
same fill handling); the test suite asserts parity between backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND_NAME = "compiled"


def affine_nearest_u8(src, matrix, offset, out_shape, int fill=0):
    """Nearest-neighbor gather of a u8 label volume under an affine index map.

    For every output index vector ``o``, the source position is
    ``s = matrix @ o + offset``, rounded per axis with floor(s + 0.5).
    Out-of-bounds positions produce ``fill``.
    """
    cdef const unsigned char[:, :, ::1] s = np.ascontiguousarray(src, dtype=np.uint8)
    cdef double[:, ::1] m = np.ascontiguousarray(matrix, dtype=np.float64).reshape(3, 3)
    cdef double[::1] t = np.ascontiguousarray(offset, dtype=np.float64).reshape(3)
    cdef Py_ssize_t nx = out_shape[0], ny = out_shape[1], nz = out_shape[2]
    out_arr = np.empty((nx, ny, nz), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef Py_ssize_t sx = s.shape[0], sy = s.shape[1], sz = s.shape[2]
    cdef Py_ssize_t i, j, k, ix, iy, iz
    cdef double bx, by, bz, px, py, pz
    cdef unsigned char f = <unsigned char> fill

    with nogil:
        for i in range(nx):
            for j in range(ny):
                bx = m[0, 0] * i + m[0, 1] * j + t[0]
                by = m[1, 0] * i + m[1, 1] * j + t[1]
                bz = m[2, 0] * i + m[2, 1] * j + t[2]
                for k in range(nz):
                    px = bx + m[0, 2] * k
                    py = by + m[1, 2] * k
                    pz = bz + m[2, 2] * k
                    ix = <Py_ssize_t> floor(px + 0.5)
                    iy = <Py_ssize_t> floor(py + 0.5)
                    iz = <Py_ssize_t> floor(pz + 0.5)
                    if 0 <= ix < sx and 0 <= iy < sy and 0 <= iz < sz:
                        out[i, j, k] = s[ix, iy, iz]
                    else:
                        out[i, j, k] = f
    return out_arr


def label_overlap_counts(a, b, int num_classes):
    """Joint label histogram: counts[ca, cb] = #voxels with a==ca and b==cb."""
    a_arr = np.ascontiguousarray(a, dtype=np.uint8).ravel()
    b_arr = np.ascontiguousarray(b, dtype=np.uint8).ravel()
    if a_arr.size != b_arr.size:
        raise ValueError("label volumes must have the same size")
    if a_arr.size and max(int(a_arr.max()), int(b_arr.max())) >= num_classes:
        raise ValueError("label out of range for num_classes")
    cdef const unsigned char[::1] av = a_arr
    cdef const unsigned char[::1] bv = b_arr
    counts_arr = np.zeros((num_classes, num_classes), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    cdef Py_ssize_t n = av.shape[0], i
    with nogil:
        for i in range(n):
            counts[av[i], bv[i]] += 1
    return counts_arr


def soft_dice_sums(a, b):
    """One-pass sums for soft dice: (sum a*b, sum a*a, sum b*b) in float64."""
    cdef const float[::1] av = np.ascontiguousarray(a, dtype=np.float32).ravel()
    cdef const float[::1] bv = np.ascontiguousarray(b, dtype=np.float32).ravel()
    if av.shape[0] != bv.shape[0]:
        raise ValueError("soft volumes must have the same size")
    cdef double sab = 0.0, saa = 0.0, sbb = 0.0
    cdef double x, y
    cdef Py_ssize_t n = av.shape[0], i
    with nogil:
        for i in range(n):
            x = av[i]
            y = bv[i]
            sab += x * y
            saa += x * x
            sbb += y * y
    return sab, saa, sbb
