"""SGD training loop for the shape-prior VAE."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch

from ..volumetric import PreprocessConfig, VolumetricMask, one_hot_encode, random_augment
from .config import VaeConfig
from .model import VaeModel, loss_terms


class CurvePoint(NamedTuple):
    iteration: int
    loss: float
    fake_dice: float
    kl_term: float


def write_training_curve(curve: Sequence[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "loss", "fake_dice", "kl_term"])
        writer.writerows(curve)


def train_vae(dataset: Sequence[VolumetricMask], config: VaeConfig,
              preprocess: PreprocessConfig | None = None,
              curve_path: str | Path | None = None,
              log_every: int = 50) -> tuple[VaeModel, list[CurvePoint]]:
    """Train the VAE on cube-preprocessed ground-truth masks.

    Runs ``config.iterations`` plain-SGD steps at the fixed learning rate on
    minibatches drawn with replacement; each drawn mask gets an on-the-fly
    rotation/translation augmentation. Returns the model and the training
    curve (also written to ``curve_path`` when given).
    """
    if not dataset:
        raise ValueError("training dataset must not be empty")
    cube = config.input_cube
    num_classes = dataset[0].num_classes
    for m in dataset:
        if m.dims != (cube, cube, cube):
            raise ValueError(f"all masks must be preprocessed to {cube}^3, "
                             f"got {m.dims}")
        if m.num_classes != num_classes:
            raise ValueError("all masks must share num_classes")
    if preprocess is None:
        preprocess = PreprocessConfig(cube_size=cube)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    eps_gen = torch.Generator().manual_seed(config.seed + 1)
    model = VaeModel(config, num_classes)
    optimizer = torch.optim.SGD(model.parameters(), lr=config.learning_rate)

    curve: list[CurvePoint] = []
    model.train()
    for iteration in range(1, config.iterations + 1):
        idx = rng.integers(0, len(dataset), size=config.batch_size)
        batch = np.stack([
            one_hot_encode(random_augment(dataset[i], preprocess, rng)).data
            for i in idx])
        x = torch.from_numpy(batch)
        eps = torch.randn((config.mc_samples, config.batch_size, config.latent_dim),
                          generator=eps_gen)
        loss, fake, kl, _ = loss_terms(model, x, eps)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if iteration % log_every == 0 or iteration == config.iterations:
            curve.append(CurvePoint(iteration, loss.item(), fake.item(), kl.item()))

    model.eval()
    if curve_path is not None:
        write_training_curve(curve, curve_path)
    return model, curve
