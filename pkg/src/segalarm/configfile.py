"""Plain ``key = value`` configuration files.

One flat namespace covering every tunable default in the pipeline; the CLI
reads one of these with ``--config`` and ``--seed`` overrides the seed. Keys
left out keep their defaults. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .bench import FAMILIES
from .vae import VaeConfig
from .volumetric import PreprocessConfig


@dataclass
class AppConfig:
    # geometry / preprocessing
    target_spacing_mm: float = 1.0
    cube_size: int = 32
    rotation_degrees: tuple[float, ...] = (-10.0, 0.0, 10.0)
    max_translation_voxels: int = 2
    # vae
    latent_dim: int = 16
    channel_schedule: tuple[int, ...] | None = (8, 16, 32)
    lambda_kl: float = 2.0 ** -5
    learning_rate: float = 0.1
    iterations: int = 5000
    batch_size: int = 4
    mc_samples: int = 1
    # synthetic bench
    grid_size: int = 64
    train_cases: int = 200
    val_cases: int = 120
    families: tuple[str, ...] = FAMILIES
    num_classes: int = 2
    # default failure mix: local boundary errors, internal holes, dropped
    # structures. The remaining operators (erode, dilate, add_false_blob)
    # stay available here as stress modes; see the README on why uniform
    # shrink/growth is out of the default (the centroid-crop normalization
    # makes the shape feature scale-blind by construction).
    operators: tuple[str, ...] = ("punch_holes", "boundary_jitter", "drop_component")
    operator_weights: tuple[float, ...] | None = None
    severity_min: float = 0.15
    severity_max: float = 1.0
    severity_power: float = 1.0
    # regression / baseline
    feature_mode: str = "fake_dice_only"
    direct_iterations: int = 2000
    # global
    seed: int = 0

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            target_spacing_mm=self.target_spacing_mm,
            cube_size=self.cube_size,
            rotation_degrees=self.rotation_degrees,
            max_translation_voxels=self.max_translation_voxels,
        )

    def vae_config(self, iterations: int | None = None) -> VaeConfig:
        return VaeConfig(
            latent_dim=self.latent_dim,
            input_cube=self.cube_size,
            channel_schedule=self.channel_schedule,
            lambda_kl=self.lambda_kl,
            learning_rate=self.learning_rate,
            iterations=self.iterations if iterations is None else iterations,
            batch_size=self.batch_size,
            mc_samples=self.mc_samples,
            seed=self.seed,
        )


def _parse_value(name: str, raw: str, current):
    raw = raw.strip()
    if name in ("channel_schedule",) and raw == "":
        return None
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple) or current is None:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if name in ("operator_weights",) and not parts:
            return None
        if name in ("families", "operators"):
            return tuple(parts)
        if name in ("rotation_degrees", "operator_weights"):
            return tuple(float(p) for p in parts)
        return tuple(int(p) for p in parts)
    return raw


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> AppConfig:
    """Build an AppConfig from an optional file plus explicit overrides."""
    config = AppConfig()
    known = {f.name: f for f in fields(AppConfig)}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(config, key, _parse_value(key, value, getattr(config, key)))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(config, key, value)
    return config


def write_config(config: AppConfig, path: str | Path) -> None:
    lines = []
    for f in fields(AppConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = ""
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
