"""Acceptance gate: every criterion at its stated tolerance, one printed
pass/fail line each.

Criteria 4-6 share one desk-scale bench and one trained shape prior
(~20 min of CPU training); criterion 9 trains a second, two-class prior.
Budget for the whole module is roughly an hour on a single CPU core. Run:

    pytest tests/test_acceptance.py -v
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from segalarm.bench import (
    CorruptionDistribution,
    CorruptionOracle,
    LabeledCase,
    corrupt,
    generate_mixed_shapes,
)
from segalarm.cli import cli
from segalarm.errors import EmptyMaskError
from segalarm.regressor import (
    collect_samples,
    fit_linear,
    make_jackknife_plan,
    predict_direct,
    predict_quality,
    train_direct_regressor,
)
from segalarm.report import AssessmentReport
from segalarm.vae import (
    VaeConfig,
    VaeModel,
    kl_standard_normal,
    loss_terms,
    shape_feature,
    train_vae,
    vae_loss,
)
from segalarm.metrics import mae as mae_metric, pearson, spearman
from segalarm.volumetric import (
    PreprocessConfig,
    SoftMask,
    VolumetricMask,
    crop_to_centroid_cube,
    dice_coefficient,
    multiclass_dice,
    one_hot_encode,
    read_vmsk,
)
from conftest import random_label_mask
from oracles import brute_kl_diag_gaussian, brute_label_dice, brute_multiclass_dice

pytestmark = pytest.mark.acceptance

# bench constants match configs/desk32.cfg
FAMILIES = ("ellipsoid", "bent_capsule", "lobed_blob", "bent_capsule", "lobed_blob")
BENCH_OPERATORS = ("punch_holes", "boundary_jitter", "drop_component")
SEVERITY = (0.15, 1.0)
DESK_VAE = dict(latent_dim=16, input_cube=32, channel_schedule=(16, 32, 64),
                lambda_kl=2.0 ** -8, iterations=5000, batch_size=4, seed=0)
PREPROCESS = PreprocessConfig(cube_size=32, max_translation_voxels=2)


def _report(n: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {n} [{name}]: {status}"
    if detail:
        line += f"  ({detail})"
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. Dice oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_1_dice_oracle_equivalence(rng):
    t0 = time.time()
    worst = 0.0
    for i in range(100):
        num_classes = int(rng.choice([2, 3, 4]))
        if i == 0:
            a = VolumetricMask(np.zeros((16,) * 3, np.uint8), num_classes=num_classes)
            b = VolumetricMask(np.zeros((16,) * 3, np.uint8), num_classes=num_classes)
        elif i == 1:
            a = VolumetricMask(np.zeros((16,) * 3, np.uint8), num_classes=num_classes)
            b = random_label_mask(rng, num_classes=num_classes, fg_prob=0.4)
        else:
            a = random_label_mask(rng, num_classes=num_classes,
                                  fg_prob=float(rng.uniform(0.0, 0.6)))
            b = random_label_mask(rng, num_classes=num_classes,
                                  fg_prob=float(rng.uniform(0.0, 0.6)))
        got = dice_coefficient(a, b)
        want = brute_label_dice(a.data, b.data)
        worst = max(worst, abs(got - want))
        got_mc = multiclass_dice(a, b, num_classes)
        want_per, want_mean = brute_multiclass_dice(a.data, b.data, num_classes)
        worst = max(worst, abs(got_mc.mean - want_mean),
                    *[abs(g - w) for g, w in zip(got_mc.per_class, want_per)])
    elapsed = time.time() - t0
    _report(1, "dice oracle equivalence",
            worst <= 1e-6 and elapsed < 60.0,
            f"max |err| {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. KL closed form
# ---------------------------------------------------------------------------

def test_criterion_2_kl_closed_form(rng):
    worst = 0.0
    negative = 0
    for _ in range(1000):
        n = int(rng.integers(1, 64))
        mu = rng.normal(scale=2.0, size=n)
        lv = rng.normal(scale=1.5, size=n)
        got = float(kl_standard_normal(torch.from_numpy(mu), torch.from_numpy(lv)))
        want = brute_kl_diag_gaussian(mu, lv)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        negative += got < 0
    # the same term surfaces through vae_loss's feature
    torch.manual_seed(0)
    tiny = VaeModel(VaeConfig(latent_dim=4, input_cube=16, channel_schedule=(4, 8),
                              iterations=1, batch_size=1, seed=0), 2).eval()
    soft = SoftMask((rng.random((1, 16, 16, 16)) > 0.6).astype(np.float32))
    _, feature = vae_loss(tiny, soft, seed=1)
    mu, lv = tiny.encode_tensor(torch.from_numpy(soft.data).unsqueeze(0))
    bridge = abs(feature.kl_term -
                 brute_kl_diag_gaussian(mu[0].detach().numpy(),
                                        lv[0].detach().numpy()))
    _report(2, "KL closed form",
            worst <= 1e-9 and negative == 0 and bridge <= 1e-5 and feature.kl_term >= 0,
            f"max rel err {worst:.2e}, negatives {negative}")


# ---------------------------------------------------------------------------
# 3. Gradient check
# ---------------------------------------------------------------------------

def test_criterion_3_gradient_check():
    t0 = time.time()
    config = VaeConfig(latent_dim=2, input_cube=8, channel_schedule=(4,),
                       iterations=1, batch_size=1, seed=0)
    torch.manual_seed(7)
    model = VaeModel(config, 2).double()
    rng = np.random.default_rng(3)
    x = torch.from_numpy((rng.random((1, 1, 8, 8, 8)) > 0.6).astype(np.float64))
    eps = torch.randn((1, 1, 2), generator=torch.Generator().manual_seed(5),
                      dtype=torch.float64)

    def loss_at():
        return loss_terms(model, x, eps)[0]

    loss = loss_at()
    model.zero_grad()
    loss.backward()
    params = list(model.named_parameters())

    def central_diff(flat, ei, h):
        orig = flat[ei].item()
        with torch.no_grad():
            flat[ei] = orig + h
            lp = loss_at().item()
            flat[ei] = orig - h
            lm = loss_at().item()
            flat[ei] = orig
        return (lp - lm) / (2.0 * h)

    rng2 = np.random.default_rng(11)
    checked = 0
    worst = 0.0
    attempts = 0
    h = 1e-4
    while checked < 20 and attempts < 80:
        attempts += 1
        name, p = params[int(rng2.integers(len(params)))]
        flat = p.detach().reshape(-1)
        ei = int(rng2.integers(flat.numel()))
        fd = central_diff(flat, ei, h)
        fd_half = central_diff(flat, ei, h / 2.0)
        # ReLU kink within the stencil: the difference quotient is not
        # estimating a derivative there, so the draw is resampled
        if abs(fd - fd_half) > 1e-4 * max(abs(fd), abs(fd_half), 1e-3):
            continue
        analytic = p.grad.reshape(-1)[ei].item()
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-8)
        worst = max(worst, rel)
        checked += 1
    elapsed = time.time() - t0
    _report(3, "gradient check",
            checked >= 20 and worst <= 1e-3 and elapsed < 300.0,
            f"{checked} params, worst rel err {worst:.2e}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 4-7. Shared desk bench + trained shape prior
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_shapes():
    shapes = generate_mixed_shapes(seed=7, count=400, families=FAMILIES)
    return shapes[:200], shapes[200:250], shapes[250:400]


@pytest.fixture(scope="module")
def trained_vae(bench_shapes):
    train_masks, _, _ = bench_shapes
    cubes = [crop_to_centroid_cube(m, 32) for m in train_masks]
    t0 = time.time()
    model, _ = train_vae(cubes, VaeConfig(**DESK_VAE), preprocess=PREPROCESS)
    return model, time.time() - t0


def _fake_dice(model, mask):
    try:
        return shape_feature(model, mask).fake_dice
    except EmptyMaskError:
        return 0.0


@pytest.fixture(scope="module")
def val_predictions(bench_shapes):
    _, _, val_masks = bench_shapes
    dist = CorruptionDistribution(operators=BENCH_OPERATORS,
                                  severity_range=SEVERITY, seed=42)
    preds = []
    for i, mask in enumerate(val_masks):
        result = corrupt(mask, dist.draw(f"v{i:03d}"))
        preds.append((result.mask, result.real_dice))
    return preds


def test_criterion_4_training_sanity(bench_shapes, trained_vae):
    _, heldout, _ = bench_shapes
    model, train_seconds = trained_vae
    dices = [_fake_dice(model, m) for m in heldout]
    mean_dice = float(np.mean(dices))
    _report(4, "training sanity",
            mean_dice >= 0.85 and train_seconds <= 1800.0,
            f"mean heldout recon dice {mean_dice:.4f} over {len(dices)} shapes, "
            f"train {train_seconds / 60:.1f} min")


def test_criterion_5_correlation_trend(trained_vae, val_predictions):
    model, _ = trained_vae
    fakes = [_fake_dice(model, p) for p, _ in val_predictions]
    reals = [r for _, r in val_predictions]
    assert len(reals) >= 100
    span_ok = min(reals) <= 0.2 and max(reals) >= 0.95
    sc = spearman(fakes, reals)
    _report(5, "correlation trend",
            span_ok and sc >= 80.0,
            f"spearman {sc:.1f}, n={len(reals)}, real span "
            f"[{min(reals):.2f}, {max(reals):.2f}]")


@pytest.fixture(scope="module")
def jackknife_artifacts(bench_shapes, trained_vae):
    train_masks, _, _ = bench_shapes
    model, _ = trained_vae
    cases = [LabeledCase(f"t{i:03d}", m) for i, m in enumerate(train_masks)]
    prep_dist = CorruptionDistribution(operators=BENCH_OPERATORS,
                                       severity_range=SEVERITY, seed=5)
    plan = make_jackknife_plan([c.case_id for c in cases], seed=6)
    samples = collect_samples(plan, CorruptionOracle(prep_dist), model, cases)
    return cases, prep_dist, plan, samples


def test_criterion_6_end_to_end_regression(trained_vae, val_predictions,
                                           jackknife_artifacts, tmp_path):
    model, _ = trained_vae
    cases, prep_dist, plan, samples = jackknife_artifacts
    params = fit_linear(samples)

    preds, reals = [], []
    for pred_mask, real in val_predictions:
        try:
            feat = shape_feature(model, pred_mask)
            preds.append(predict_quality(params, feat))
        except EmptyMaskError:
            preds.append(0.0)
        reals.append(real)
    vae_mae = mae_metric(preds, reals)
    vae_pc = pearson(preds, reals)
    vae_sc = spearman(preds, reals)

    # direct-regression baseline on the identical jackknife predictions
    by_id = {c.case_id: c for c in cases}
    factory = CorruptionOracle(prep_dist)
    segmenters = {1: factory.train([by_id[i] for i in plan.fold2_ids]),
                  2: factory.train([by_id[i] for i in plan.fold1_ids])}
    dataset = []
    for fold, ids in ((1, plan.fold1_ids), (2, plan.fold2_ids)):
        for case_id in ids:
            case = by_id[case_id]
            pred = segmenters[fold].predict(case)
            dataset.append((pred, (dice_coefficient(pred, case.mask),)))
    direct = train_direct_regressor(dataset, VaeConfig(**DESK_VAE),
                                    preprocess=PREPROCESS)
    direct_preds = [predict_direct(direct, p)[0] for p, _ in val_predictions]
    direct_sc = spearman(direct_preds, reals)
    direct_mae = mae_metric(direct_preds, reals)
    direct_pc = pearson(direct_preds, reals)

    # comparison table through the CLI contract
    def write_report(path, method, preds):
        doc = {
            "per_case": [{"case_id": f"v{i:03d}", "predicted_dice": p,
                          "fake_dice": p, "kl_term": 0.0, "real_dice": r}
                         for i, (p, r) in enumerate(zip(preds, reals))],
            "aggregate": {"mae": mae_metric(preds, reals),
                          "std_residual": 0.0,
                          "pearson": pearson(preds, reals),
                          "spearman": spearman(preds, reals)},
            "metadata": {"method": method},
        }
        path.write_text(json.dumps(doc))

    write_report(tmp_path / "vae.json", "VAE-16", preds)
    write_report(tmp_path / "direct.json", "Direct Regression", direct_preds)
    rc = cli(["compare", "--reports", str(tmp_path / "vae.json"),
              str(tmp_path / "direct.json"), "--out-dir", str(tmp_path)])
    table = (tmp_path / "compare.txt").read_text()
    table_ok = rc == 0 and "VAE-16" in table and "Direct Regression" in table \
        and "S.C." in table

    _report(6, "end-to-end regression",
            vae_mae <= 10.0 and vae_pc >= 80.0 and table_ok
            and vae_sc >= direct_sc - 5.0,
            f"VAE mae {vae_mae:.2f} pc {vae_pc:.1f} sc {vae_sc:.1f} | "
            f"direct mae {direct_mae:.2f} pc {direct_pc:.1f} sc {direct_sc:.1f}")


def test_invariant_erosion_sweep_monotone_degradation(bench_shapes, trained_vae):
    """For a trained model and a fixed in-distribution mask, fake dice is
    non-increasing (0.02 slack) along an erosion sweep that strictly
    decreases real dice."""
    from segalarm.bench import CorruptionSpec

    _, heldout, _ = bench_shapes
    model, _ = trained_vae
    qualifying = 0
    for mask in heldout[:4]:
        reals, fakes = [], []
        for severity in np.linspace(0.0, 0.875, 8):
            result = corrupt(mask, CorruptionSpec("erode", float(severity), seed=3))
            reals.append(result.real_dice)
            fakes.append(_fake_dice(model, result.mask))
        if not all(r2 < r1 for r1, r2 in zip(reals, reals[1:])):
            continue  # sweep emptied the mask early; precondition not met
        qualifying += 1
        assert all(f2 <= f1 + 0.02 for f1, f2 in zip(fakes, fakes[1:])), \
            f"fake dice increased along erosion sweep: {fakes}"
    assert qualifying >= 2


def test_invariant_family_separability(bench_shapes, trained_vae):
    """Trained prior separates in-distribution shapes from heavy corruption:
    mean fake dice gap >= 0.15."""
    _, heldout, _ = bench_shapes
    model, _ = trained_vae
    dist = CorruptionDistribution(operators=BENCH_OPERATORS,
                                  severity_range=(0.5, 1.0), seed=9)
    clean = [_fake_dice(model, m) for m in heldout]
    corrupted = [_fake_dice(model, corrupt(m, dist.draw(f"s{i}")).mask)
                 for i, m in enumerate(heldout)]
    gap = float(np.mean(clean) - np.mean(corrupted))
    assert gap >= 0.15, f"separability gap {gap:.3f}"


def test_criterion_7_jackknife_hygiene(jackknife_artifacts):
    cases, prep_dist, plan, samples = jackknife_artifacts
    fold_train = {1: frozenset(plan.fold2_ids), 2: frozenset(plan.fold1_ids)}
    violations = sum(1 for s in samples if s.case_id in fold_train[s.source_fold])
    covered = sorted(s.case_id for s in samples)
    _report(7, "jackknife hygiene",
            violations == 0 and covered == sorted(c.case_id for c in cases),
            f"{len(samples)} samples, {violations} violations")


# ---------------------------------------------------------------------------
# 8. Determinism of the full pipeline
# ---------------------------------------------------------------------------

TOY_CFG = """
cube_size = 16
latent_dim = 4
channel_schedule = 4,8
lambda_kl = 0.00390625
iterations = 60
batch_size = 2
grid_size = 32
train_cases = 10
val_cases = 8
max_translation_voxels = 1
severity_min = 0.05
seed = 13
"""


def test_criterion_8_pipeline_determinism(tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(TOY_CFG)
    reports = []
    for tag in ("one", "two"):
        bench = tmp_path / f"bench_{tag}"
        run = tmp_path / f"run_{tag}"
        common = ["--config", str(cfg), "--seed", "13"]
        assert cli(["synth-gen", *common, "--out-dir", str(bench)]) == 0
        assert cli(["train-vae", *common, "--bench", str(bench),
                    "--out-dir", str(run)]) == 0
        assert cli(["collect-samples", *common, "--bench", str(bench),
                    "--vae", str(run / "vae.ckpt"), "--out-dir", str(run)]) == 0
        assert cli(["fit-regressor", *common, "--samples", str(run / "samples.csv"),
                    "--vae", str(run / "vae.ckpt"), "--out-dir", str(run)]) == 0
        assert cli(["evaluate", *common, "--bench", str(bench),
                    "--vae", str(run / "vae.ckpt"),
                    "--regressor", str(run / "regressor.txt"),
                    "--out-dir", str(run)]) == 0
        reports.append((run / "report.json").read_bytes())
    _report(8, "pipeline determinism", reports[0] == reports[1],
            f"report bytes {'identical' if reports[0] == reports[1] else 'differ'}")


# ---------------------------------------------------------------------------
# 9. Multi-class path
# ---------------------------------------------------------------------------

MULTI_CFG = """
cube_size = 32
latent_dim = 16
channel_schedule = 16,32,64
lambda_kl = 0.00390625
iterations = 2500
batch_size = 4
grid_size = 64
train_cases = 100
val_cases = 100
num_classes = 3
max_translation_voxels = 2
severity_min = 0.15
operators = punch_holes,boundary_jitter,drop_component
seed = 21
"""


def test_criterion_9_multiclass_path(tmp_path, rng):
    cfg = tmp_path / "multi.cfg"
    cfg.write_text(MULTI_CFG)
    bench = tmp_path / "bench"
    run = tmp_path / "run"
    common = ["--config", str(cfg), "--seed", "21"]
    assert cli(["synth-gen", *common, "--out-dir", str(bench)]) == 0

    # per-class dice oracle equivalence on real bench masks
    worst = 0.0
    mask_files = sorted((bench / "predictions").glob("*.vmsk"))[:10]
    for path in mask_files:
        pred = read_vmsk(path)
        gt = read_vmsk(bench / "masks" / path.name)
        got = multiclass_dice(pred, gt, 3)
        want_per, want_mean = brute_multiclass_dice(pred.data, gt.data, 3)
        worst = max(worst, abs(got.mean - want_mean),
                    *[abs(g - w) for g, w in zip(got.per_class, want_per)])

    assert cli(["train-vae", *common, "--bench", str(bench),
                "--out-dir", str(run)]) == 0
    assert cli(["collect-samples", *common, "--bench", str(bench),
                "--vae", str(run / "vae.ckpt"), "--out-dir", str(run)]) == 0
    assert cli(["fit-regressor", *common, "--samples", str(run / "samples.csv"),
                "--vae", str(run / "vae.ckpt"), "--out-dir", str(run)]) == 0
    assert cli(["evaluate", *common, "--bench", str(bench),
                "--vae", str(run / "vae.ckpt"),
                "--regressor", str(run / "regressor.txt"),
                "--out-dir", str(run)]) == 0

    large = AssessmentReport.from_json((run / "report_class1.json").read_text())
    small = AssessmentReport.from_json((run / "report_class2.json").read_text())
    sc_large = large.aggregate.spearman
    sc_small = small.aggregate.spearman
    _report(9, "multi-class path",
            worst <= 1e-6 and sc_large > sc_small,
            f"dice oracle max err {worst:.2e}; spearman large {sc_large:.1f} "
            f"vs small {sc_small:.1f}")
