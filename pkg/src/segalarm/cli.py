"""Command-line pipeline driver.

Subcommands mirror the pipeline stages:

    synth-gen        materialize a reproducible synthetic bench directory
    train-vae        train the shape-prior VAE on the bench's training masks
    collect-samples  jackknifed (shape feature, real Dice) sample collection
    fit-regressor    least-squares fit of the quality regressor
    assess           predict quality for a directory of VMSK masks (no GT)
    evaluate         predict + score against the bench's oracle Dice
    baseline-direct  train/evaluate the direct-regression baseline
    compare          side-by-side method table from report JSONs

Exit codes: 0 success, 2 usage error, 1 failure (with a single
machine-readable JSON error line on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    CorruptionDistribution,
    CorruptionOracle,
    LabeledCase,
    corrupt,
    generate_mixed_shapes,
    generate_two_class_cases,
)
from .configfile import AppConfig, load_config
from .errors import EmptyMaskError
from .regressor import (
    RegressorParams,
    collect_samples,
    fit_linear,
    fit_linear_per_class,
    make_jackknife_plan,
    predict_direct,
    read_samples_csv,
    train_direct_regressor,
    write_samples_csv,
)
from .report import (
    Aggregate,
    AssessmentCase,
    AssessmentReport,
    build_report,
    comparison_table,
    write_comparison_csv,
    write_per_case_csv,
    write_scatter_csv,
)
from .vae import (
    ShapeFeature,
    file_sha256,
    load_checkpoint,
    save_checkpoint,
    shape_feature,
    train_vae,
)
from .volumetric import VolumetricMask, crop_to_centroid_cube, dice_coefficient, \
    multiclass_dice, read_vmsk, resample_isotropic, write_vmsk


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="key = value configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed for all randomized behavior")
    parser.add_argument("--out-dir", type=Path, default=Path("."),
                        help="directory for outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segalarm",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="materialize a synthetic bench directory")
    _add_common(p)

    p = sub.add_parser("train-vae", help="train the shape-prior VAE")
    _add_common(p)
    p.add_argument("--bench", type=Path, required=True)

    p = sub.add_parser("collect-samples", help="jackknifed sample collection")
    _add_common(p)
    p.add_argument("--bench", type=Path, required=True)
    p.add_argument("--vae", type=Path, required=True)

    p = sub.add_parser("fit-regressor", help="fit the linear quality regressor")
    _add_common(p)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--vae", type=Path, required=True)

    p = sub.add_parser("assess", help="predict quality for VMSK masks (no ground truth)")
    _add_common(p)
    p.add_argument("--masks", type=Path, required=True,
                   help="directory of .vmsk prediction files")
    p.add_argument("--vae", type=Path, required=True)
    p.add_argument("--regressor", type=Path, required=True)
    p.add_argument("--alarm-threshold", type=float, default=None,
                   help="flag cases whose predicted quality falls below this")

    p = sub.add_parser("evaluate", help="predict + score against bench oracle Dice")
    _add_common(p)
    p.add_argument("--bench", type=Path, required=True)
    p.add_argument("--vae", type=Path, required=True)
    p.add_argument("--regressor", type=Path, required=True)
    p.add_argument("--alarm-threshold", type=float, default=None)

    p = sub.add_parser("baseline-direct", help="train/evaluate the direct-regression baseline")
    _add_common(p)
    p.add_argument("--bench", type=Path, required=True)

    p = sub.add_parser("compare", help="side-by-side table from report JSONs")
    _add_common(p)
    p.add_argument("--reports", type=Path, nargs="+", required=True,
                   help="report JSON files; row names come from metadata.method")

    return parser


def _config_from_args(args) -> AppConfig:
    return load_config(args.config, overrides={"seed": args.seed})


def _corruption_distribution(config: AppConfig, seed: int) -> CorruptionDistribution:
    return CorruptionDistribution(
        operators=config.operators,
        weights=config.operator_weights,
        severity_range=(config.severity_min, config.severity_max),
        severity_power=config.severity_power,
        seed=seed,
    )


def _write_manifest(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _read_manifest(bench: Path) -> list[dict]:
    with open(bench / "manifest.csv", newline="") as f:
        return list(csv.DictReader(f))


def cmd_synth_gen(args) -> int:
    config = _config_from_args(args)
    out = args.out_dir
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "predictions").mkdir(parents=True, exist_ok=True)

    total = config.train_cases + config.val_cases
    if config.num_classes == 2:
        masks = generate_mixed_shapes(config.seed, total, config.grid_size,
                                      config.families)
        labels = [config.families[i % len(config.families)] for i in range(total)]
    elif config.num_classes == 3:
        masks = generate_two_class_cases(config.seed, total, config.grid_size)
        labels = ["two_class"] * total
    else:
        raise ValueError("synth-gen supports num_classes 2 or 3")

    order = np.random.default_rng(config.seed + 1).permutation(total)
    dist = _corruption_distribution(config, config.seed + 2)
    rows = []
    n_fg = config.num_classes - 1
    for rank, idx in enumerate(order):
        case_id = f"case{idx:04d}"
        split = "train" if rank < config.train_cases else "val"
        mask = masks[idx]
        write_vmsk(mask, out / "masks" / f"{case_id}.vmsk")
        row = {"case_id": case_id, "family": labels[idx], "split": split,
               "operator": "", "severity": "", "real_dice": ""}
        if n_fg > 1:
            for c in range(1, n_fg + 1):
                row[f"real_dice_class{c}"] = ""
        if split == "val":
            spec = dist.draw(case_id)
            result = corrupt(mask, spec)
            write_vmsk(result.mask, out / "predictions" / f"{case_id}.vmsk")
            row.update(operator=spec.operator, severity=f"{spec.severity:.6f}",
                       real_dice=f"{result.real_dice:.8f}")
            if result.per_class_real_dice is not None:
                for c, v in enumerate(result.per_class_real_dice, start=1):
                    row[f"real_dice_class{c}"] = f"{v:.8f}"
        rows.append(row)

    fieldnames = ["case_id", "family", "split", "operator", "severity", "real_dice"]
    if n_fg > 1:
        fieldnames += [f"real_dice_class{c}" for c in range(1, n_fg + 1)]
    _write_manifest(out / "manifest.csv", rows, fieldnames)
    print(f"bench written to {out} ({config.train_cases} train / "
          f"{config.val_cases} val cases)")
    return 0


def _load_bench_cases(bench: Path, split: str) -> list[LabeledCase]:
    cases = []
    for row in _read_manifest(bench):
        if row["split"] == split:
            mask = read_vmsk(bench / "masks" / f"{row['case_id']}.vmsk")
            cases.append(LabeledCase(row["case_id"], mask))
    return cases


def _preprocess_training_mask(mask: VolumetricMask, config: AppConfig) -> VolumetricMask:
    resampled = resample_isotropic(mask, config.target_spacing_mm)
    return crop_to_centroid_cube(resampled, config.cube_size)


def cmd_train_vae(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    cases = _load_bench_cases(args.bench, "train")
    if not cases:
        raise ValueError(f"no training cases found in {args.bench}")
    cubes = [_preprocess_training_mask(c.mask, config) for c in cases]
    model, _curve = train_vae(cubes, config.vae_config(),
                              preprocess=config.preprocess_config(),
                              curve_path=args.out_dir / "training_curve.csv")
    ckpt = args.out_dir / "vae.ckpt"
    save_checkpoint(model, ckpt)
    print(f"checkpoint written to {ckpt}")
    return 0


def cmd_collect_samples(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.vae)
    cases = _load_bench_cases(args.bench, "train")
    plan = make_jackknife_plan([c.case_id for c in cases], config.seed + 10)
    dist = _corruption_distribution(config, config.seed + 11)
    samples = collect_samples(plan, CorruptionOracle(dist), model, cases)
    write_samples_csv(samples, args.out_dir / "samples.csv")
    print(f"{len(samples)} samples written to {args.out_dir / 'samples.csv'}")
    return 0


def _write_regressor(path: Path, params_list: list[RegressorParams],
                     vae_hash: str) -> None:
    lines = [f"feature_mode = {params_list[0].feature_mode}",
             f"vae_checkpoint_hash = {vae_hash}",
             f"num_targets = {len(params_list)}"]
    for i, p in enumerate(params_list, start=1):
        lines.append(f"a_{i} = {p.a!r}")
        lines.append(f"b_{i} = {p.b!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_regressor(path: Path) -> tuple[list[RegressorParams], str]:
    fields = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    mode = fields["feature_mode"]
    n = int(fields["num_targets"])
    params = [RegressorParams(float(fields[f"a_{i}"]), float(fields[f"b_{i}"]), mode)
              for i in range(1, n + 1)]
    return params, fields.get("vae_checkpoint_hash", "")


def cmd_fit_regressor(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    samples = read_samples_csv(args.samples, lambda_kl=config.lambda_kl)
    if samples and samples[0].per_class_real_dice is not None \
            and len(samples[0].per_class_real_dice) > 1:
        params_list = list(fit_linear_per_class(samples))
    else:
        params_list = [fit_linear(samples, config.feature_mode)]
    _write_regressor(args.out_dir / "regressor.txt", params_list,
                     file_sha256(args.vae))
    for i, p in enumerate(params_list, start=1):
        print(f"target {i}: a = {p.a:.6f}, b = {p.b:.6f} ({p.feature_mode})")
    return 0


def _assess_cases(model, params_list, named_masks, real_dice=None):
    """Shared by assess/evaluate: one AssessmentCase list per target class."""
    n_fg = model.num_classes - 1
    per_target = [[] for _ in range(len(params_list))]
    for j, (case_id, mask) in enumerate(named_masks):
        try:
            feat = shape_feature(model, mask)
            empty = False
        except EmptyMaskError:
            feat = ShapeFeature(0.0, 0.0, 0.0, (0.0,) * n_fg)
            empty = True
        for t in range(len(params_list)):
            if len(params_list) == 1:
                f = feat
            else:
                class_fake = feat.per_class_fake_dice[t]
                f = ShapeFeature(class_fake, feat.kl_term,
                                 class_fake - model.config.lambda_kl * feat.kl_term,
                                 feat.per_class_fake_dice)
            real = None if real_dice is None else real_dice[j][t]
            per_target[t].append(AssessmentCase(case_id, f, real, empty))
    return per_target


def _report_paths(out_dir: Path, prefix: str, target: int, n_targets: int):
    suffix = f"_class{target + 1}" if n_targets > 1 else ""
    return (out_dir / f"{prefix}{suffix}.json",
            out_dir / f"{prefix}{suffix}_per_case.csv",
            out_dir / f"{prefix}{suffix}_scatter.csv")


def _emit_reports(per_target, params_list, out_dir, prefix, metadata,
                  with_ground_truth, alarm_threshold=None) -> list[AssessmentReport]:
    reports = []
    for t, cases in enumerate(per_target):
        report = build_report(cases, params_list[t], with_ground_truth,
                              metadata=metadata, alarm_threshold=alarm_threshold)
        json_path, csv_path, scatter_path = _report_paths(
            out_dir, prefix, t, len(per_target))
        json_path.write_text(report.to_json() + "\n")
        write_per_case_csv(report, csv_path)
        if with_ground_truth:
            write_scatter_csv(report, scatter_path)
        reports.append(report)
        if report.aggregate:
            a = report.aggregate
            print(f"{json_path.name}: MAE {a.mae:.2f}  STD {a.std_residual:.2f}  "
                  f"P.C. {a.pearson:.2f}  S.C. {a.spearman:.2f}")
        else:
            print(f"{json_path.name}: {len(report.per_case)} cases (no aggregates)")
    return reports


def cmd_assess(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.vae)
    params_list, vae_hash = _read_regressor(args.regressor)
    mask_files = sorted(args.masks.glob("*.vmsk"))
    if not mask_files:
        raise ValueError(f"no .vmsk files in {args.masks}")
    named = [(p.stem, read_vmsk(p)) for p in mask_files]
    metadata = {"method": f"VAE-{model.config.latent_dim}",
                "vae_checkpoint_hash": file_sha256(args.vae),
                "regressor_hash": file_sha256(args.regressor),
                "seed": config.seed,
                "std_definition": "population"}
    per_target = _assess_cases(model, params_list, named)
    _emit_reports(per_target, params_list, args.out_dir, "report", metadata,
                  with_ground_truth=False, alarm_threshold=args.alarm_threshold)
    return 0


def cmd_evaluate(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.vae)
    params_list, _ = _read_regressor(args.regressor)
    named, real = [], []
    for row in _read_manifest(args.bench):
        if row["split"] != "val":
            continue
        mask = read_vmsk(args.bench / "predictions" / f"{row['case_id']}.vmsk")
        named.append((row["case_id"], mask))
        if len(params_list) == 1:
            real.append((float(row["real_dice"]),))
        else:
            real.append(tuple(float(row[f"real_dice_class{c + 1}"])
                              for c in range(len(params_list))))
    metadata = {"method": f"VAE-{model.config.latent_dim}",
                "vae_checkpoint_hash": file_sha256(args.vae),
                "regressor_hash": file_sha256(args.regressor),
                "bench_manifest_hash": file_sha256(args.bench / "manifest.csv"),
                "seed": config.seed,
                "std_definition": "population"}
    per_target = _assess_cases(model, params_list, named, real)
    _emit_reports(per_target, params_list, args.out_dir, "report", metadata,
                  with_ground_truth=True, alarm_threshold=args.alarm_threshold)
    return 0


def cmd_baseline_direct(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    train_cases = _load_bench_cases(args.bench, "train")
    plan = make_jackknife_plan([c.case_id for c in train_cases], config.seed + 10)
    factory = CorruptionOracle(_corruption_distribution(config, config.seed + 11))
    by_id = {c.case_id: c for c in train_cases}
    seg1 = factory.train([by_id[i] for i in plan.fold2_ids])
    seg2 = factory.train([by_id[i] for i in plan.fold1_ids])
    n_fg = train_cases[0].mask.num_classes - 1
    dataset = []
    for seg, fold in ((seg1, plan.fold1_ids), (seg2, plan.fold2_ids)):
        for case_id in fold:
            case = by_id[case_id]
            pred = seg.predict(case)
            if n_fg == 1:
                target = (dice_coefficient(pred, case.mask),)
            else:
                target = multiclass_dice(pred, case.mask, n_fg + 1).per_class
            dataset.append((pred, target))

    vcfg = config.vae_config(iterations=config.direct_iterations)
    model = train_direct_regressor(dataset, vcfg,
                                   preprocess=config.preprocess_config())

    named, real = [], []
    for row in _read_manifest(args.bench):
        if row["split"] != "val":
            continue
        mask = read_vmsk(args.bench / "predictions" / f"{row['case_id']}.vmsk")
        named.append((row["case_id"], mask))
        if n_fg == 1:
            real.append((float(row["real_dice"]),))
        else:
            real.append(tuple(float(row[f"real_dice_class{c + 1}"])
                              for c in range(n_fg)))

    metadata = {"method": "Direct Regression",
                "bench_manifest_hash": file_sha256(args.bench / "manifest.csv"),
                "seed": config.seed,
                "std_definition": "population"}
    for t in range(n_fg):
        cases = []
        for (case_id, mask), target in zip(named, real):
            pred = predict_direct(model, mask)
            feat = ShapeFeature(pred[t], 0.0, pred[t], pred)
            cases.append(AssessmentCase(case_id, feat, target[t]))
        # identity regressor: the network output already is the prediction
        params = RegressorParams(1.0, 0.0, "fake_dice_only")
        report = build_report(cases, params, True, metadata=metadata)
        json_path, csv_path, scatter_path = _report_paths(
            args.out_dir, "direct_report", t, n_fg)
        json_path.write_text(report.to_json() + "\n")
        write_per_case_csv(report, csv_path)
        write_scatter_csv(report, scatter_path)
        if report.aggregate:
            a = report.aggregate
            print(f"{json_path.name}: MAE {a.mae:.2f}  STD {a.std_residual:.2f}  "
                  f"P.C. {a.pearson:.2f}  S.C. {a.spearman:.2f}")
    return 0


def cmd_compare(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in args.reports:
        report = AssessmentReport.from_json(Path(path).read_text())
        if report.aggregate is None:
            raise ValueError(f"{path} has no aggregate metrics to compare")
        name = report.metadata.get("method", Path(path).stem)
        rows.append((name, report.aggregate))
    table = comparison_table(rows)
    (args.out_dir / "compare.txt").write_text(table + "\n")
    write_comparison_csv(rows, args.out_dir / "compare.csv")
    print(table)
    return 0


_COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train-vae": cmd_train_vae,
    "collect-samples": cmd_collect_samples,
    "fit-regressor": cmd_fit_regressor,
    "assess": cmd_assess,
    "evaluate": cmd_evaluate,
    "baseline-direct": cmd_baseline_direct,
    "compare": cmd_compare,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
