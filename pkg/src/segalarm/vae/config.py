"""Shape-prior VAE configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class VaeConfig:
    """Hyperparameters for the shape-prior VAE.

    Defaults mirror the production recipe (128-d latent, 128-cube input,
    lambda 2^-5, plain SGD at a fixed 0.1 learning rate, 20000 iterations).
    Desk-scale runs override cube/latent/iterations through the config file.

    ``channel_schedule`` lists encoder feature counts per stride-2 stage;
    ``None`` doubles from 16 until the spatial side reaches 4.
    """

    latent_dim: int = 128
    input_cube: int = 128
    channel_schedule: tuple[int, ...] | None = None
    lambda_kl: float = 2.0 ** -5
    learning_rate: float = 0.1
    iterations: int = 20000
    batch_size: int = 4
    mc_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.input_cube < 8 or self.input_cube & (self.input_cube - 1):
            raise ValueError(f"input_cube must be a power of two >= 8, "
                             f"got {self.input_cube}")
        if self.lambda_kl <= 0:
            raise ValueError("lambda_kl must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1 or self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("iterations, batch_size and mc_samples must be >= 1")
        max_stages = int(math.log2(self.input_cube)) - 2
        if self.channel_schedule is None:
            self.channel_schedule = tuple(16 * 2 ** i for i in range(max_stages))
        else:
            self.channel_schedule = tuple(int(c) for c in self.channel_schedule)
        if not 1 <= len(self.channel_schedule) <= max_stages:
            raise ValueError(
                f"channel_schedule length must be in [1, {max_stages}] "
                f"for input_cube={self.input_cube}")
        if any(c < 1 for c in self.channel_schedule):
            raise ValueError("channel counts must be >= 1")

    @property
    def bottleneck_side(self) -> int:
        return self.input_cube // 2 ** len(self.channel_schedule)
