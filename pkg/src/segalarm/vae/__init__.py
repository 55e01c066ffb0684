from .checkpoint import file_sha256, load_checkpoint, save_checkpoint
from .config import VaeConfig
from .features import preprocess_for_vae, reconstruct, reconstruction_dice, shape_feature
from .model import (
    EMPTY_FEATURE,
    ShapeFeature,
    VaeModel,
    decode,
    encode,
    kl_standard_normal,
    loss_terms,
    reparameterize,
    soft_dice_per_class,
    vae_loss,
)
from .train import CurvePoint, train_vae, write_training_curve

__all__ = [
    "CurvePoint",
    "EMPTY_FEATURE",
    "ShapeFeature",
    "VaeConfig",
    "VaeModel",
    "decode",
    "encode",
    "file_sha256",
    "kl_standard_normal",
    "load_checkpoint",
    "loss_terms",
    "preprocess_for_vae",
    "reconstruct",
    "reconstruction_dice",
    "reparameterize",
    "save_checkpoint",
    "shape_feature",
    "soft_dice_per_class",
    "train_vae",
    "vae_loss",
    "write_training_curve",
]
