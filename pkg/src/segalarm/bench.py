"""Synthetic desk-scale bench: parametric 3D shape families, corruption
operators with exactly computable Dice against the original, and a
corruption-oracle "segmenter" that fills the preparation-algorithm slot.

Everything is seed-deterministic; per-case randomness is derived from the
case id so results are reproducible case by case.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import GenerationError
from .volumetric import VolumetricMask, dice_coefficient, multiclass_dice

FAMILIES = ("ellipsoid", "bent_capsule", "lobed_blob")
CORRUPTION_OPERATORS = ("erode", "dilate", "punch_holes", "add_false_blob",
                        "boundary_jitter", "drop_component")

# Severity 1.0 maps to this many erosion/dilation passes (6-connected).
_MORPH_MAX_ITERS = 8
_STRUCT = ndimage.generate_binary_structure(3, 1)


@dataclass
class ShapeSpec:
    """Parameters for one shape family.

    ``size_range_voxels`` bounds the half-extent along the longest axis;
    ``axis_ratio_range`` bounds the two shorter axes relative to it. Bend and
    lobe parameters only affect the families that use them.
    """

    family: str = "ellipsoid"
    grid_size: int = 64
    size_range_voxels: tuple[float, float] = (9.0, 17.0)
    axis_ratio_range: tuple[float, float] = (0.35, 0.95)
    bend_range: tuple[float, float] = (0.15, 0.6)
    lobe_count_range: tuple[int, int] = (2, 5)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.size_range_voxels[0] <= 0:
            raise ValueError("size range must be positive")


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    # Uniform rotation from a normalized random quaternion.
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _coords(n: int) -> np.ndarray:
    return np.indices((n, n, n), dtype=np.float32).reshape(3, -1).T


def _ellipsoid_fill(coords, center, radii, rot):
    local = (coords - center) @ rot  # rot columns are the ellipsoid axes
    return ((local / radii) ** 2).sum(axis=1) <= 1.0


def _make_ellipsoid(rng, spec, n):
    r = rng.uniform(*spec.size_range_voxels)
    ratios = rng.uniform(*spec.axis_ratio_range, size=2)
    radii = np.array([r, r * ratios[0], r * ratios[1]], dtype=np.float32)
    center = n / 2 + rng.uniform(-4, 4, size=3)
    rot = _random_rotation(rng)
    return _ellipsoid_fill(_coords(n), center, radii, rot).reshape(n, n, n)


def _make_bent_capsule(rng, spec, n):
    r = rng.uniform(*spec.size_range_voxels)
    tube = r * rng.uniform(0.3, 0.55)
    bend = r * rng.uniform(*spec.bend_range)
    center = n / 2 + rng.uniform(-3, 3, size=3)
    rot = _random_rotation(rng)
    t = np.linspace(-1.0, 1.0, 25, dtype=np.float32)
    line = np.stack([t * r, bend * (1 - t * t) - bend / 2, np.zeros_like(t)], axis=1)
    points = line @ rot.T + center
    coords = _coords(n)
    best = np.full(coords.shape[0], np.inf, dtype=np.float32)
    for p in points:
        d = ((coords - p) ** 2).sum(axis=1)
        np.minimum(best, d, out=best)
    return (best <= tube * tube).reshape(n, n, n)


def _make_lobed_blob(rng, spec, n):
    r = rng.uniform(*spec.size_range_voxels)
    core = r * 0.55
    center = n / 2 + rng.uniform(-3, 3, size=3)
    coords = _coords(n)
    inside = _ellipsoid_fill(coords, center, np.full(3, core, np.float32), np.eye(3))
    k = rng.integers(spec.lobe_count_range[0], spec.lobe_count_range[1] + 1)
    for _ in range(k):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        lobe_r = r * rng.uniform(0.35, 0.55)
        dist = rng.uniform(0.6, 0.95) * (core + lobe_r) * 0.8
        radii = lobe_r * rng.uniform(0.7, 1.0, size=3).astype(np.float32)
        lobe_c = center + direction * dist
        inside |= _ellipsoid_fill(coords, lobe_c, radii, _random_rotation(rng))
    return inside.reshape(n, n, n)


_BUILDERS = {
    "ellipsoid": _make_ellipsoid,
    "bent_capsule": _make_bent_capsule,
    "lobed_blob": _make_lobed_blob,
}


def _connected(binary: np.ndarray) -> bool:
    _, count = ndimage.label(binary, structure=_STRUCT)
    return count == 1


def generate_shapes(spec: ShapeSpec, count: int) -> list[VolumetricMask]:
    """Seed-deterministic masks of one family on a fixed grid.

    Every generated mask is non-empty and 6-connected; parameter draws that
    violate this are retried a bounded number of times.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(spec.seed)
    build = _BUILDERS[spec.family]
    masks = []
    for _ in range(count):
        for _attempt in range(20):
            binary = build(rng, spec, spec.grid_size)
            if binary.any() and _connected(binary):
                break
        else:
            raise GenerationError(f"could not generate a connected {spec.family}")
        masks.append(VolumetricMask(binary.astype(np.uint8), (1.0, 1.0, 1.0), 2))
    return masks


def generate_mixed_shapes(seed: int, count: int, grid_size: int = 64,
                          families: Sequence[str] = FAMILIES) -> list[VolumetricMask]:
    """Round-robin over the given family slots with per-family seeded streams.

    Repeating a family name in ``families`` oversamples it proportionally.
    """
    slots = [families[i % len(families)] for i in range(count)]
    unique = list(dict.fromkeys(families))
    pools = {}
    for i, fam in enumerate(unique):
        n = slots.count(fam)
        if n:
            pools[fam] = iter(generate_shapes(
                ShapeSpec(family=fam, grid_size=grid_size, seed=seed + i), n))
    return [next(pools[fam]) for fam in slots]


def generate_two_class_cases(seed: int, count: int, grid_size: int = 64) -> list[VolumetricMask]:
    """Two-foreground-class masks: a large stable shape (class 1) carrying a
    small erratic one (class 2), mirroring an organ-plus-lesion layout."""
    stable = ShapeSpec(family="ellipsoid", grid_size=grid_size,
                       size_range_voxels=(12.0, 17.0), axis_ratio_range=(0.6, 0.95),
                       seed=seed)
    erratic = ShapeSpec(family="lobed_blob", grid_size=grid_size,
                        size_range_voxels=(2.5, 6.0), axis_ratio_range=(0.3, 1.0),
                        seed=seed + 1)
    large = generate_shapes(stable, count)
    small = generate_shapes(erratic, count)
    rng = np.random.default_rng(seed + 2)
    cases = []
    for big, little in zip(large, small):
        data = big.data.copy()
        fg = np.argwhere(little.data > 0)
        anchor = np.argwhere(data > 0)
        # Recenter the small shape onto a random voxel of the large one.
        target = anchor[rng.integers(len(anchor))]
        shift = target - fg.mean(axis=0).round().astype(int)
        moved = np.zeros_like(data)
        src = fg + shift
        keep = ((src >= 0) & (src < grid_size)).all(axis=1)
        src = src[keep]
        moved[src[:, 0], src[:, 1], src[:, 2]] = 1
        data[moved > 0] = 2
        cases.append(VolumetricMask(data, (1.0, 1.0, 1.0), 3))
    return cases


@dataclass
class CorruptionSpec:
    """One corruption draw: operator, severity in [0, 1], seed.

    Severity 0 is the identity for every operator.
    """

    operator: str = "erode"
    severity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.operator not in CORRUPTION_OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError(f"severity must be in [0,1], got {self.severity}")


class CorruptionResult(NamedTuple):
    mask: VolumetricMask
    real_dice: float
    per_class_real_dice: tuple[float, ...] | None


def _morph(binary, severity, rng, grow):
    # Continuous pass count: full passes plus a partial pass that flips a
    # severity-proportional random subset of the next boundary shell, so
    # Dice is strictly monotone in severity rather than stepped.
    op = ndimage.binary_dilation if grow else ndimage.binary_erosion
    total = severity * _MORPH_MAX_ITERS
    out = binary.copy()
    for _ in range(int(total)):
        out = op(out, structure=_STRUCT)
    frac = total - int(total)
    if frac > 0.0:
        stepped = op(out, structure=_STRUCT)
        band = np.argwhere(stepped != out)
        k = round(frac * len(band))
        if k:
            chosen = band[rng.permutation(len(band))[:k]]
            out[chosen[:, 0], chosen[:, 1], chosen[:, 2]] = grow
    return out


def _punch_holes(binary, severity, rng):
    out = binary.copy()
    fg = np.argwhere(out)
    if len(fg) == 0:
        return out
    r_eq = (3 * len(fg) / (4 * np.pi)) ** (1 / 3)
    n_holes = 1 + round(severity * 5)
    radius = max(1.0, severity * 0.6 * r_eq)
    coords = np.indices(out.shape, dtype=np.float32).reshape(3, -1).T
    for _ in range(n_holes):
        c = fg[rng.integers(len(fg))]
        hole = ((coords - c) ** 2).sum(axis=1) <= radius * radius
        out[hole.reshape(out.shape)] = False
    return out


def _add_false_blob(binary, severity, rng):
    out = binary.copy()
    fg = np.argwhere(out)
    if len(fg) == 0:
        return out
    r_eq = (3 * len(fg) / (4 * np.pi)) ** (1 / 3)
    radius = max(1.0, severity * 0.9 * r_eq)
    centroid = fg.mean(axis=0)
    n = out.shape[0]
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    # blob sits just past the surface; only its volume scales with severity
    c = np.clip(centroid + direction * (r_eq + radius + 2),
                radius, n - 1 - radius)
    coords = np.indices(out.shape, dtype=np.float32).reshape(3, -1).T
    blob = ((coords - c) ** 2).sum(axis=1) <= radius * radius
    out |= blob.reshape(out.shape)
    return out


def _boundary_jitter(binary, severity, rng):
    # flip probability scales from 0 so severity -> 0 approaches the identity
    width = 1 + round(severity * 2)
    band = ndimage.binary_dilation(binary, _STRUCT, iterations=width) & \
        ~ndimage.binary_erosion(binary, _STRUCT, iterations=width)
    flip = band & (rng.random(binary.shape) < 0.9 * severity)
    return binary ^ flip


def _drop_component(binary, severity, rng):
    labels, count = ndimage.label(binary, structure=_STRUCT)
    if count == 0:
        return binary.copy()
    k = round(severity * count)
    if k == 0:
        return binary.copy()
    drop = rng.permutation(count)[:k] + 1
    return binary & ~np.isin(labels, drop)


_CORRUPTORS = {
    "erode": lambda b, s, r: _morph(b, s, r, grow=False),
    "dilate": lambda b, s, r: _morph(b, s, r, grow=True),
    "punch_holes": _punch_holes,
    "add_false_blob": _add_false_blob,
    "boundary_jitter": _boundary_jitter,
    "drop_component": _drop_component,
}


def corrupt(mask: VolumetricMask, spec: CorruptionSpec) -> CorruptionResult:
    """Apply one corruption operator and return the exact Dice against the
    original (the bench's oracle quality label).

    Multi-class masks are corrupted per class channel; where channels collide
    afterwards the higher class index wins.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.severity == 0.0:
        corrupted = mask.copy()
    else:
        data = np.zeros_like(mask.data)
        for c in range(1, mask.num_classes):
            binary = _CORRUPTORS[spec.operator](mask.data == c, spec.severity, rng)
            data[binary] = c
        corrupted = mask.with_data(data)
    real = dice_coefficient(mask, corrupted)
    per_class = None
    if mask.num_classes > 2:
        per_class = multiclass_dice(mask, corrupted, mask.num_classes).per_class
    return CorruptionResult(corrupted, real, per_class)


@dataclass
class CorruptionDistribution:
    """Distribution over corruption draws used by the oracle segmenter.

    Operators are sampled by weight; severity is ``lo + (hi - lo) * u^power``
    with u uniform, so ``severity_power > 1`` concentrates mass on mild
    corruption (the common regime for a working segmenter) while keeping the
    full range reachable. The defaults span real Dice from near 0 to 1.0 on
    the default shapes.
    """

    operators: tuple[str, ...] = CORRUPTION_OPERATORS
    weights: tuple[float, ...] | None = None
    severity_range: tuple[float, float] = (0.0, 1.0)
    severity_power: float = 1.0
    seed: int = 0

    def draw(self, case_id: str) -> CorruptionSpec:
        rng = np.random.default_rng(_case_seed(self.seed, case_id))
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            w = w / w.sum()
        op = str(rng.choice(self.operators, p=w))
        lo, hi = self.severity_range
        severity = float(lo + (hi - lo) * rng.uniform() ** self.severity_power)
        return CorruptionSpec(op, severity, seed=_case_seed(self.seed + 1, case_id))


def _case_seed(seed: int, case_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{case_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class LabeledCase:
    """A case id with its ground-truth mask (the pipeline is mask-only)."""

    case_id: str
    mask: VolumetricMask


class CorruptionOracle:
    """Preparation-segmenter factory backed by the corruption oracle.

    "Training" records the fold ids (no-op learning); prediction applies a
    case-seeded corruption to the ground truth, simulating a segmenter of
    variable, exactly known quality.
    """

    def __init__(self, distribution: CorruptionDistribution):
        self.distribution = distribution

    def train(self, cases: Sequence[LabeledCase]) -> "TrainedOracle":
        return TrainedOracle(self.distribution, frozenset(c.case_id for c in cases))


class TrainedOracle:
    def __init__(self, distribution: CorruptionDistribution, training_ids: frozenset[str]):
        self.distribution = distribution
        self.training_ids = training_ids

    def predict(self, case: LabeledCase) -> VolumetricMask:
        spec = self.distribution.draw(case.case_id)
        return corrupt(case.mask, spec).mask


def oracle_segmenter(fold_ids: Sequence[str],
                     distribution: CorruptionDistribution) -> TrainedOracle:
    """The spec'd functional form: an oracle already 'trained' on fold_ids."""
    return TrainedOracle(distribution, frozenset(fold_ids))
