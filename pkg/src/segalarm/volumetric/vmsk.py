"""VMSK mask file format (version 1).

Layout, all little-endian:

    bytes 0-3   magic "VMSK"
    byte  4     version 0x01
    u32 x 3     nx, ny, nz
    f32 x 3     sx, sy, sz  (mm per voxel)
    u16         num_classes
    u8 x nx*ny*nz  labels, x-fastest order

Readers reject wrong magic/version, truncated payloads, and labels that are
out of range for num_classes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mask import VolumetricMask

MAGIC = b"VMSK"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIfffH")


def write_vmsk(mask: VolumetricMask, path: str | Path) -> None:
    nx, ny, nz = mask.dims
    header = _HEADER.pack(MAGIC, VERSION, nx, ny, nz, *mask.spacing, mask.num_classes)
    payload = mask.data.tobytes(order="F")  # F order = x varies fastest
    Path(path).write_bytes(header + payload)


def read_vmsk(path: str | Path) -> VolumetricMask:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated VMSK header")
    magic, version, nx, ny, nz, sx, sy, sz, num_classes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported VMSK version {version}")
    n = nx * ny * nz
    payload = raw[_HEADER.size:]
    if len(payload) != n:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {n}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    if data.size and int(data.max()) >= num_classes:
        raise ValueError(f"{path}: label {int(data.max())} out of range "
                         f"for num_classes={num_classes}")
    return VolumetricMask(data.copy(), (sx, sy, sz), num_classes)
