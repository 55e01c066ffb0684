"""Single-file VAE checkpoints.

Format: a text header carrying a version tag and the full config as
``key = value`` lines, a ``---`` separator, then one length-prefixed binary
block per parameter tensor in state-dict order. Loading rebuilds the model
from the stored config and fails loudly on any mismatch.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from .config import VaeConfig
from .model import VaeModel

_FORMAT_TAG = "SEGALARM-VAE 1"

_CONFIG_FIELDS = ("latent_dim", "input_cube", "channel_schedule", "lambda_kl",
                  "learning_rate", "iterations", "batch_size", "mc_samples", "seed")


def save_checkpoint(model: VaeModel, path: str | Path) -> None:
    cfg = model.config
    lines = [_FORMAT_TAG]
    for name in _CONFIG_FIELDS:
        value = getattr(cfg, name)
        if name == "channel_schedule":
            value = ",".join(str(c) for c in value)
        lines.append(f"{name} = {value}")
    lines.append(f"num_classes = {model.num_classes}")
    lines.append("---")
    header = ("\n".join(lines) + "\n").encode()

    blocks = []
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy()
        raw = np.ascontiguousarray(array, dtype=np.float32).tobytes()
        shape = ",".join(str(s) for s in array.shape) or "scalar"
        blocks.append(f"tensor {name} {shape} {len(raw)}\n".encode() + raw)
    Path(path).write_bytes(header + b"".join(blocks))


def _parse_header(lines: list[str]) -> tuple[VaeConfig, int]:
    fields: dict[str, str] = {}
    for line in lines:
        key, _, value = line.partition("=")
        if not _:
            raise CheckpointError(f"malformed header line: {line!r}")
        fields[key.strip()] = value.strip()
    try:
        schedule = tuple(int(c) for c in fields["channel_schedule"].split(","))
        config = VaeConfig(
            latent_dim=int(fields["latent_dim"]),
            input_cube=int(fields["input_cube"]),
            channel_schedule=schedule,
            lambda_kl=float(fields["lambda_kl"]),
            learning_rate=float(fields["learning_rate"]),
            iterations=int(fields["iterations"]),
            batch_size=int(fields["batch_size"]),
            mc_samples=int(fields["mc_samples"]),
            seed=int(fields["seed"]),
        )
        num_classes = int(fields["num_classes"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint config: {exc}") from exc
    return config, num_classes


def load_checkpoint(path: str | Path) -> VaeModel:
    raw = Path(path).read_bytes()
    sep = raw.find(b"---\n")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header separator")
    header = raw[:sep].decode(errors="replace").splitlines()
    if not header or header[0] != _FORMAT_TAG:
        raise CheckpointError(f"{path}: not a {_FORMAT_TAG} checkpoint")
    config, num_classes = _parse_header(header[1:])

    model = VaeModel(config, num_classes)
    expected = model.state_dict()
    state: dict[str, torch.Tensor] = {}
    pos = sep + 4
    while pos < len(raw):
        eol = raw.find(b"\n", pos)
        if eol < 0:
            raise CheckpointError(f"{path}: truncated tensor block header")
        parts = raw[pos:eol].decode(errors="replace").split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise CheckpointError(f"{path}: malformed tensor block at byte {pos}")
        _, name, shape_str, size_str = parts
        nbytes = int(size_str)
        shape = () if shape_str == "scalar" else tuple(int(s) for s in shape_str.split(","))
        blob = raw[eol + 1:eol + 1 + nbytes]
        if len(blob) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor data for {name}")
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected tensor {name!r} for stored config")
        if tuple(expected[name].shape) != shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {shape}, config implies "
                f"{tuple(expected[name].shape)}")
        array = np.frombuffer(blob, dtype=np.float32).reshape(shape).copy()
        state[name] = torch.from_numpy(array)
        pos = eol + 1 + nbytes
    missing = set(expected) - set(state)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    model.load_state_dict(state)
    model.eval()
    return model


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
