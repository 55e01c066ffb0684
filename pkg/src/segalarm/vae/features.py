"""Shape-feature extraction for arbitrary predicted masks."""

from __future__ import annotations

import numpy as np
import torch

from ..volumetric import SoftMask, VolumetricMask, crop_to_centroid_cube, one_hot_encode
from .model import ShapeFeature, VaeModel, kl_standard_normal, soft_dice_per_class


def preprocess_for_vae(mask: VolumetricMask, cube: int) -> SoftMask:
    """Centroid crop + one-hot, the canonical path into the VAE.

    Raises EmptyMaskError for masks with no foreground; callers decide the
    sentinel policy (the regressor maps empties to predicted quality 0).
    """
    return one_hot_encode(crop_to_centroid_cube(mask, cube))


def reconstruct(model: VaeModel, mask: SoftMask) -> SoftMask:
    """Deterministic reconstruction through the encoder mean (z = mu)."""
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(mask.data)).to(model.dtype).unsqueeze(0)
        recon, _, _ = model(x)
    return SoftMask(recon[0].numpy().astype(np.float32), mask.spacing)


def shape_feature(model: VaeModel, predicted_mask: VolumetricMask,
                  deterministic: bool = True, seed: int = 0) -> ShapeFeature:
    """Shape-prior value of a predicted mask.

    The mask is cropped to the model's input cube and one-hot encoded
    internally. Deterministic mode decodes z = mu, making the feature a pure
    function of (model, mask); stochastic mode averages ``config.mc_samples``
    reparameterized draws from the seeded generator.
    """
    soft = preprocess_for_vae(predicted_mask, model.config.input_cube)
    x = torch.from_numpy(soft.data).to(model.dtype).unsqueeze(0)
    with torch.no_grad():
        mu, log_var = model.encode_tensor(x)
        kl = float(kl_standard_normal(mu, log_var)[0])
        if deterministic:
            draws = [mu]
        else:
            gen = torch.Generator().manual_seed(seed)
            std = torch.exp(0.5 * log_var)
            draws = [mu + std * torch.randn(mu.shape, generator=gen).to(model.dtype)
                     for _ in range(model.config.mc_samples)]
        per_class = torch.zeros(1, x.shape[1], dtype=x.dtype)
        for z in draws:
            per_class = per_class + soft_dice_per_class(model.decode_tensor(z), x)
        per_class = per_class / len(draws)
    fake = float(per_class.mean())
    kl = max(0.0, kl)
    return ShapeFeature(
        fake_dice=fake,
        kl_term=kl,
        s_value=fake - model.config.lambda_kl * kl,
        per_class_fake_dice=tuple(float(v) for v in per_class[0]),
    )


def reconstruction_dice(model: VaeModel, mask: VolumetricMask) -> float:
    """Deterministic fake dice of a ground-truth mask, used to monitor how
    well the prior has learned the training distribution."""
    return shape_feature(model, mask, deterministic=True).fake_dice
