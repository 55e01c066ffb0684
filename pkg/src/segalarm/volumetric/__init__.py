from .kernels import backend_name
from .mask import PreprocessConfig, SoftMask, VolumetricMask
from .ops import (
    DiceByClass,
    argmax_decode,
    augment,
    crop_to_centroid_cube,
    dice_coefficient,
    multiclass_dice,
    one_hot_encode,
    random_augment,
    resample_isotropic,
    rotate_translate,
)
from .vmsk import read_vmsk, write_vmsk

__all__ = [
    "DiceByClass",
    "PreprocessConfig",
    "SoftMask",
    "VolumetricMask",
    "argmax_decode",
    "augment",
    "backend_name",
    "crop_to_centroid_cube",
    "dice_coefficient",
    "multiclass_dice",
    "one_hot_encode",
    "random_augment",
    "read_vmsk",
    "resample_isotropic",
    "rotate_translate",
    "write_vmsk",
]
