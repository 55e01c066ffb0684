"""Step two of the pipeline: jackknife sample collection, linear fit of the
shape feature against real Dice, quality prediction, and the
direct-regression baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .bench import LabeledCase
from .errors import DegenerateFitError, EmptyMaskError
from .vae import ShapeFeature, VaeConfig, VaeModel, shape_feature
from .volumetric import (
    PreprocessConfig,
    VolumetricMask,
    crop_to_centroid_cube,
    dice_coefficient,
    multiclass_dice,
    one_hot_encode,
    random_augment,
)

FEATURE_MODES = ("fake_dice_only", "s_value")


class Segmenter(Protocol):
    training_ids: frozenset[str]

    def predict(self, case: LabeledCase) -> VolumetricMask: ...


class SegmenterFactory(Protocol):
    def train(self, cases: Sequence[LabeledCase]) -> Segmenter: ...


@dataclass
class JackknifePlan:
    """Two disjoint folds covering the training ids."""

    fold1_ids: tuple[str, ...]
    fold2_ids: tuple[str, ...]
    seed: int

    def __post_init__(self):
        f1, f2 = set(self.fold1_ids), set(self.fold2_ids)
        if f1 & f2:
            raise ValueError("folds must be disjoint")
        if abs(len(f1) - len(f2)) > 1:
            raise ValueError("fold sizes may differ by at most 1")


def make_jackknife_plan(case_ids: Sequence[str], seed: int) -> JackknifePlan:
    """Seeded uniform shuffle, then an even split (sizes differ by <= 1)."""
    ids = sorted(set(case_ids))
    if len(ids) != len(case_ids):
        raise ValueError("case ids must be unique")
    if len(ids) < 2:
        raise ValueError("need at least 2 cases to build a jackknife plan")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    half = (len(ids) + 1) // 2
    return JackknifePlan(tuple(shuffled[:half]), tuple(shuffled[half:]), seed)


@dataclass
class QualitySample:
    """One (shape feature, real Dice) pair from a held-out prediction."""

    case_id: str
    feature: ShapeFeature
    real_dice: float
    source_fold: int
    empty_prediction: bool = False
    per_class_real_dice: tuple[float, ...] | None = None


@dataclass
class RegressorParams:
    a: float
    b: float
    feature_mode: str = "fake_dice_only"

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("regressor parameters must be finite")


def feature_value(feature: ShapeFeature, mode: str) -> float:
    if mode == "fake_dice_only":
        return feature.fake_dice
    if mode == "s_value":
        return feature.s_value
    raise ValueError(f"unknown feature_mode {mode!r}")


def collect_samples(plan: JackknifePlan, factory: SegmenterFactory,
                    vae: VaeModel, cases: Sequence[LabeledCase]) -> list[QualitySample]:
    """Jackknifed sample collection.

    Trains one segmenter per fold on the complementary fold, predicts every
    held-out case, and pairs each prediction's shape feature with its exact
    Dice against ground truth. Empty predictions are recorded with the
    zero-feature sentinel and flagged.
    """
    by_id = {c.case_id: c for c in cases}
    missing = [i for i in plan.fold1_ids + plan.fold2_ids if i not in by_id]
    if missing:
        raise ValueError(f"dataset does not cover plan ids: {missing[:5]}")

    folds = {1: plan.fold1_ids, 2: plan.fold2_ids}
    segmenters = {
        1: factory.train([by_id[i] for i in folds[2]]),
        2: factory.train([by_id[i] for i in folds[1]]),
    }
    num_classes = cases[0].mask.num_classes
    samples = []
    for k in (1, 2):
        segmenter = segmenters[k]
        train_ids = frozenset(folds[2 if k == 1 else 1])
        for case_id in folds[k]:
            # hard jackknife hygiene: never score a case the segmenter saw
            assert case_id not in train_ids, "jackknife leakage"
            if getattr(segmenter, "training_ids", None) is not None:
                assert case_id not in segmenter.training_ids, "jackknife leakage"
            case = by_id[case_id]
            pred = segmenter.predict(case)
            real = dice_coefficient(pred, case.mask)
            per_class = None
            if num_classes > 2:
                per_class = multiclass_dice(pred, case.mask, num_classes).per_class
            try:
                feat = shape_feature(vae, pred)
                empty = False
            except EmptyMaskError:
                feat = ShapeFeature(0.0, 0.0, 0.0, (0.0,) * (num_classes - 1))
                empty = True
            samples.append(QualitySample(case_id, feat, real, k, empty, per_class))
    return samples


def fit_linear(samples: Sequence[QualitySample],
               feature_mode: str = "fake_dice_only") -> RegressorParams:
    """Closed-form ordinary least squares of real Dice on the shape feature."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to fit")
    x = np.array([feature_value(s.feature, feature_mode) for s in samples])
    y = np.array([s.real_dice for s in samples])
    return RegressorParams(*_ols(x, y), feature_mode)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateFitError("all feature values are identical")
    a = float(xc @ (y - y.mean())) / sxx
    return a, float(y.mean() - a * x.mean())


def fit_linear_per_class(samples: Sequence[QualitySample]) -> tuple[RegressorParams, ...]:
    """Independent per-foreground-class fits on per-class fake dice."""
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to fit")
    n_fg = len(samples[0].feature.per_class_fake_dice)
    params = []
    for c in range(n_fg):
        x = np.array([s.feature.per_class_fake_dice[c] for s in samples])
        y = np.array([s.per_class_real_dice[c] if s.per_class_real_dice is not None
                      else s.real_dice for s in samples])
        params.append(RegressorParams(*_ols(x, y), "fake_dice_only"))
    return tuple(params)


def predict_quality(params: RegressorParams, feature: ShapeFeature) -> float:
    """Predicted Dice a*x + b, clamped to [0, 1]."""
    x = feature_value(feature, params.feature_mode)
    return float(np.clip(params.a * x + params.b, 0.0, 1.0))


def write_samples_csv(samples: Sequence[QualitySample], path: str | Path) -> None:
    n_fg = len(samples[0].feature.per_class_fake_dice) if samples else 1
    multi = samples and samples[0].per_class_real_dice is not None
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["case_id", "source_fold", "fake_dice", "kl_term", "real_dice",
                  "empty_prediction"]
        if multi:
            header += [f"fake_dice_class{c + 1}" for c in range(n_fg)]
            header += [f"real_dice_class{c + 1}" for c in range(n_fg)]
        writer.writerow(header)
        for s in samples:
            row = [s.case_id, s.source_fold, f"{s.feature.fake_dice:.8f}",
                   f"{s.feature.kl_term:.8f}", f"{s.real_dice:.8f}",
                   int(s.empty_prediction)]
            if multi:
                row += [f"{v:.8f}" for v in s.feature.per_class_fake_dice]
                row += [f"{v:.8f}" for v in s.per_class_real_dice]
            writer.writerow(row)


def read_samples_csv(path: str | Path, lambda_kl: float = 2.0 ** -5) -> list[QualitySample]:
    """Load samples; s_value is rebuilt from the stored terms and lambda."""
    samples = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            fake = float(row["fake_dice"])
            kl = float(row["kl_term"])
            class_fakes = tuple(float(v) for k, v in sorted(row.items())
                                if k.startswith("fake_dice_class"))
            class_reals = tuple(float(v) for k, v in sorted(row.items())
                                if k.startswith("real_dice_class"))
            feature = ShapeFeature(fake, kl, fake - lambda_kl * kl,
                                   class_fakes or (fake,))
            samples.append(QualitySample(
                case_id=row["case_id"],
                feature=feature,
                real_dice=float(row["real_dice"]),
                source_fold=int(row["source_fold"]),
                empty_prediction=bool(int(row.get("empty_prediction", "0"))),
                per_class_real_dice=class_reals or None,
            ))
    return samples


class DirectRegressor(nn.Module):
    """Baseline quality network: the VAE encoder trunk followed by a
    two-layer fully connected head with sigmoid outputs, one per
    foreground class."""

    def __init__(self, config: VaeConfig, num_classes: int = 2):
        super().__init__()
        self.config = config
        self.num_classes = num_classes
        # reuse the exact encoder architecture for a fair comparison
        self._vae_shell = VaeModel(config, num_classes)
        self.encoder = self._vae_shell.encoder
        side = config.bottleneck_side
        flat = config.channel_schedule[-1] * side ** 3
        self.fc1 = nn.Linear(flat, config.latent_dim)
        self.fc2 = nn.Linear(config.latent_dim, num_classes - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.encoder(x).flatten(1)
        return torch.sigmoid(self.fc2(torch.relu(self.fc1(h))))


def _cube_input(mask: VolumetricMask, cube: int, num_classes: int) -> np.ndarray:
    """Crop/one-hot a predicted mask; empty predictions become a zero cube."""
    if mask.is_empty:
        return np.zeros((num_classes - 1, cube, cube, cube), dtype=np.float32)
    return one_hot_encode(crop_to_centroid_cube(mask, cube)).data


def train_direct_regressor(dataset: Sequence[tuple[VolumetricMask, tuple[float, ...]]],
                           config: VaeConfig,
                           preprocess: PreprocessConfig | None = None) -> DirectRegressor:
    """Train the direct-regression baseline on (predicted mask, real Dice)
    pairs with squared error, mirroring the VAE's budget: same augmentation,
    same optimizer, same iteration count.

    Each target is a per-foreground-class Dice tuple (length 1 for binary).
    """
    if not dataset:
        raise ValueError("training dataset must not be empty")
    cube = config.input_cube
    num_classes = dataset[0][0].num_classes
    if preprocess is None:
        preprocess = PreprocessConfig(cube_size=cube)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = DirectRegressor(config, num_classes)
    optimizer = torch.optim.SGD(model.parameters(), lr=config.learning_rate)

    cubes = []
    targets = []
    empty_cube = VolumetricMask(np.zeros((cube,) * 3, np.uint8), num_classes=num_classes)
    for mask, dice in dataset:
        cubes.append(empty_cube if mask.is_empty
                     else crop_to_centroid_cube(mask, cube))
        targets.append(np.asarray(dice, dtype=np.float32))
    y_all = torch.from_numpy(np.stack(targets))

    model.train()
    for _ in range(config.iterations):
        idx = rng.integers(0, len(cubes), size=config.batch_size)
        batch = np.stack([
            one_hot_encode(random_augment(cubes[i], preprocess, rng)).data
            for i in idx])
        x = torch.from_numpy(batch)
        pred = model(x)
        loss = ((pred - y_all[idx]) ** 2).mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    model.eval()
    return model


def predict_direct(model: DirectRegressor, mask: VolumetricMask) -> tuple[float, ...]:
    """Per-foreground-class predicted Dice for one mask."""
    x = torch.from_numpy(_cube_input(mask, model.config.input_cube,
                                     model.num_classes)).unsqueeze(0)
    with torch.no_grad():
        out = model(x)
    return tuple(float(v) for v in out[0])
