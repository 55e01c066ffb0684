"""The shape-prior VAE and its training objective.

Encoder stages alternate a stride-1 convolution with a stride-2
downsampling convolution, instance-normalized and ReLU-activated; two
linear heads emit the latent mean and log-variance (no activation on the
heads, so the mean is unconstrained and the variance can shrink below one).
The decoder mirrors the encoder with stride-2/stride-1 transpose
convolutions and a sigmoid output, one channel per foreground class.

The objective per mask Y is

    maximize  E_z[Dice(g(z), Y)] - lambda * KL[N(mu(Y), Sigma(Y)) || N(0, I)]

optimized in the equivalent minimization form (1 - dice) + lambda * KL.
The expected-dice term is the "fake Dice" used downstream as the shape
feature; Sigma is diagonal, parameterized as log-variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..volumetric import SoftMask
from .config import VaeConfig


@dataclass(frozen=True)
class ShapeFeature:
    """The shape-prior value of one mask: expected reconstruction dice
    ("fake Dice"), the KL regularizer, and their lambda-weighted combination.

    ``per_class_fake_dice`` carries the per-foreground-class dice for
    multi-class masks (equal to ``(fake_dice,)`` in the binary case).
    """

    fake_dice: float
    kl_term: float
    s_value: float
    per_class_fake_dice: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kl_term < 0:
            raise ValueError(f"kl_term must be non-negative, got {self.kl_term}")


EMPTY_FEATURE = ShapeFeature(0.0, 0.0, 0.0, ())


class VaeModel(nn.Module):
    """Convolutional VAE over one-hot mask cubes."""

    def __init__(self, config: VaeConfig, num_classes: int = 2):
        super().__init__()
        if num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        self.config = config
        self.num_classes = num_classes
        channels = config.channel_schedule
        out_ch = num_classes - 1

        enc = []
        prev = out_ch
        for c in channels:
            enc += [nn.Conv3d(prev, c, 3, stride=1, padding=1),
                    nn.InstanceNorm3d(c, affine=True), nn.ReLU(inplace=True),
                    nn.Conv3d(c, c, 3, stride=2, padding=1),
                    nn.InstanceNorm3d(c, affine=True), nn.ReLU(inplace=True)]
            prev = c
        self.encoder = nn.Sequential(*enc)

        side = config.bottleneck_side
        flat = channels[-1] * side ** 3
        self.mu_head = nn.Linear(flat, config.latent_dim)
        self.log_var_head = nn.Linear(flat, config.latent_dim)
        self.decoder_fc = nn.Linear(config.latent_dim, flat)

        dec = []
        rev = list(channels)[::-1]
        for i, c in enumerate(rev):
            nxt = rev[i + 1] if i + 1 < len(rev) else out_ch
            dec += [nn.ConvTranspose3d(c, c, 3, stride=2, padding=1, output_padding=1),
                    nn.InstanceNorm3d(c, affine=True), nn.ReLU(inplace=True),
                    nn.ConvTranspose3d(c, nxt, 3, stride=1, padding=1)]
            if i + 1 < len(rev):
                dec += [nn.InstanceNorm3d(nxt, affine=True), nn.ReLU(inplace=True)]
        self.decoder = nn.Sequential(*dec)
        self._bottleneck = (channels[-1], side)

    def encode_tensor(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.ndim != 5:
            raise ValueError(f"expected (B, C, n, n, n) input, got shape {tuple(x.shape)}")
        n = self.config.input_cube
        if x.shape[1] != self.num_classes - 1 or x.shape[2:] != (n, n, n):
            raise ValueError(f"expected {self.num_classes - 1} channels of {n}^3, "
                             f"got shape {tuple(x.shape)}")
        h = self.encoder(x).flatten(1)
        return self.mu_head(h), self.log_var_head(h)

    def decode_tensor(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise ValueError(f"expected (B, {self.config.latent_dim}) latent, "
                             f"got shape {tuple(z.shape)}")
        c, side = self._bottleneck
        h = torch.relu(self.decoder_fc(z)).view(-1, c, side, side, side)
        return torch.sigmoid(self.decoder(h))

    def forward(self, x: torch.Tensor, eps: torch.Tensor | None = None):
        mu, log_var = self.encode_tensor(x)
        z = mu if eps is None else mu + torch.exp(0.5 * log_var) * eps
        return self.decode_tensor(z), mu, log_var

    @property
    def dtype(self) -> torch.dtype:
        return self.mu_head.weight.dtype


def soft_dice_per_class(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Differentiable per-class soft dice, shape (B, C)."""
    num = 2.0 * (pred * target).flatten(2).sum(-1)
    den = (pred * pred).flatten(2).sum(-1) + (target * target).flatten(2).sum(-1)
    return num / den.clamp_min(1e-8)


def kl_standard_normal(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL[N(mu, diag(exp(log_var))) || N(0, I)] per sample, shape (B,)."""
    return 0.5 * (log_var.exp() + mu * mu - 1.0 - log_var).sum(dim=-1)


def loss_terms(model: VaeModel, x: torch.Tensor, eps: torch.Tensor):
    """Differentiable objective for a batch.

    ``eps`` has shape (mc, B, latent); fake dice is averaged over the mc
    draws. Returns (loss, fake_dice, kl, per_class_fake) where loss is
    (1 - fake_dice) + lambda * kl, batch-averaged.
    """
    mu, log_var = model.encode_tensor(x)
    std = torch.exp(0.5 * log_var)
    per_class = torch.zeros(x.shape[0], x.shape[1], dtype=x.dtype, device=x.device)
    for e in eps:
        recon = model.decode_tensor(mu + std * e)
        per_class = per_class + soft_dice_per_class(recon, x)
    per_class = per_class / eps.shape[0]
    fake = per_class.mean(dim=1)
    kl = kl_standard_normal(mu, log_var)
    loss = (1.0 - fake.mean()) + model.config.lambda_kl * kl.mean()
    return loss, fake.mean(), kl.mean(), per_class.mean(dim=0)


def _to_tensor(mask: SoftMask, model: VaeModel) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(mask.data)).to(model.dtype).unsqueeze(0)


def encode(model: VaeModel, mask: SoftMask) -> tuple[np.ndarray, np.ndarray]:
    """Latent Gaussian parameters (mu, log_var) for one preprocessed mask."""
    with torch.no_grad():
        mu, log_var = model.encode_tensor(_to_tensor(mask, model))
    return mu[0].numpy(), log_var[0].numpy()


def reparameterize(mu: np.ndarray, log_var: np.ndarray, seed: int) -> np.ndarray:
    """z = mu + exp(log_var / 2) * eps with eps drawn from a seeded generator."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    if mu.shape != log_var.shape:
        raise ValueError("mu and log_var must have the same shape")
    gen = torch.Generator().manual_seed(seed)
    eps = torch.randn(mu.shape, generator=gen, dtype=torch.float64).numpy()
    return mu + np.exp(0.5 * log_var) * eps


def decode(model: VaeModel, z: np.ndarray) -> SoftMask:
    """Per-voxel foreground probabilities for a latent vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != model.config.latent_dim:
        raise ValueError(f"latent vector must have length {model.config.latent_dim}, "
                         f"got shape {z.shape}")
    with torch.no_grad():
        out = model.decode_tensor(torch.from_numpy(z).to(model.dtype).unsqueeze(0))
    return SoftMask(out[0].numpy().astype(np.float32))


def vae_loss(model: VaeModel, mask: SoftMask, seed: int) -> tuple[float, ShapeFeature]:
    """Objective value and shape feature for one preprocessed mask.

    The fake dice averages ``config.mc_samples`` reparameterized draws from
    the seeded generator; the returned loss is the minimization form.
    """
    x = _to_tensor(mask, model)
    gen = torch.Generator().manual_seed(seed)
    eps = torch.randn((model.config.mc_samples, 1, model.config.latent_dim),
                      generator=gen).to(model.dtype)
    with torch.no_grad():
        loss, fake, kl, per_class = loss_terms(model, x, eps)
    feature = ShapeFeature(
        fake_dice=float(fake),
        kl_term=max(0.0, float(kl)),
        s_value=float(fake) - model.config.lambda_kl * max(0.0, float(kl)),
        per_class_fake_dice=tuple(float(v) for v in per_class),
    )
    return float(loss), feature
