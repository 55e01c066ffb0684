"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the NumPy
implementation when the extension is missing or when the environment
variable ``SEGALARM_PURE_PYTHON`` is set to a non-empty value.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SEGALARM_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

affine_nearest_u8 = _impl.affine_nearest_u8
label_overlap_counts = _impl.label_overlap_counts
soft_dice_sums = _impl.soft_dice_sums


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'numpy'."""
    return _impl.BACKEND_NAME
