"""Assessment reports: per-case predictions, aggregate metrics, and the
CSV/JSON artifacts the CLI emits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import UndefinedCorrelationError
from .metrics import mae, pearson, spearman, std_residual
from .regressor import RegressorParams, predict_quality
from .vae import ShapeFeature


@dataclass
class AssessmentCase:
    """One case to report on: its shape feature and, when available, the
    real Dice against ground truth."""

    case_id: str
    feature: ShapeFeature
    real_dice: float | None = None
    empty_prediction: bool = False


@dataclass
class PerCaseResult:
    case_id: str
    predicted_dice: float
    fake_dice: float
    kl_term: float
    real_dice: float | None = None
    alarm: bool | None = None


@dataclass
class Aggregate:
    """MAE / STD of residuals / Pearson / Spearman, all x100."""

    mae: float
    std_residual: float
    pearson: float
    spearman: float


@dataclass
class AssessmentReport:
    per_case: list[PerCaseResult]
    aggregate: Aggregate | None
    metadata: dict

    def to_json(self) -> str:
        doc = {
            "per_case": [
                {k: v for k, v in {
                    "case_id": c.case_id,
                    "predicted_dice": c.predicted_dice,
                    "fake_dice": c.fake_dice,
                    "kl_term": c.kl_term,
                    "real_dice": c.real_dice,
                    "alarm": c.alarm,
                }.items() if v is not None or k == "real_dice"}
                for c in self.per_case
            ],
            "aggregate": None if self.aggregate is None else {
                "mae": self.aggregate.mae,
                "std_residual": self.aggregate.std_residual,
                "pearson": self.aggregate.pearson,
                "spearman": self.aggregate.spearman,
            },
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AssessmentReport":
        doc = json.loads(text)
        per_case = [PerCaseResult(
            case_id=c["case_id"],
            predicted_dice=c["predicted_dice"],
            fake_dice=c["fake_dice"],
            kl_term=c["kl_term"],
            real_dice=c.get("real_dice"),
            alarm=c.get("alarm"),
        ) for c in doc["per_case"]]
        agg = doc.get("aggregate")
        aggregate = None if agg is None else Aggregate(**agg)
        return cls(per_case, aggregate, doc.get("metadata", {}))


def build_report(cases: Sequence[AssessmentCase], params: RegressorParams,
                 with_ground_truth: bool = True,
                 metadata: dict | None = None,
                 alarm_threshold: float | None = None) -> AssessmentReport:
    """Predict quality per case; attach aggregates when ground truth is
    available for at least two cases.

    Empty predictions get predicted quality 0 (the documented sentinel).
    """
    if not cases:
        raise ValueError("need at least one case to report on")
    per_case = []
    for c in cases:
        predicted = 0.0 if c.empty_prediction else predict_quality(params, c.feature)
        alarm = None if alarm_threshold is None else bool(predicted < alarm_threshold)
        per_case.append(PerCaseResult(
            case_id=c.case_id,
            predicted_dice=predicted,
            fake_dice=c.feature.fake_dice,
            kl_term=c.feature.kl_term,
            real_dice=c.real_dice if with_ground_truth else None,
            alarm=alarm,
        ))

    aggregate = None
    scored = [(r.predicted_dice, r.real_dice) for r in per_case if r.real_dice is not None]
    if with_ground_truth and len(scored) >= 2:
        pred = [s[0] for s in scored]
        real = [s[1] for s in scored]
        try:
            aggregate = Aggregate(
                mae=mae(pred, real),
                std_residual=std_residual(pred, real),
                pearson=pearson(pred, real),
                spearman=spearman(pred, real),
            )
        except UndefinedCorrelationError:
            aggregate = None  # constant predictions: correlations undefined

    meta = dict(metadata or {})
    if alarm_threshold is not None:
        meta["alarm_threshold"] = alarm_threshold
    return AssessmentReport(per_case, aggregate, meta)


def write_per_case_csv(report: AssessmentReport, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        has_alarm = any(r.alarm is not None for r in report.per_case)
        header = ["case_id", "predicted_dice", "fake_dice", "kl_term", "real_dice"]
        if has_alarm:
            header.append("alarm")
        writer.writerow(header)
        for r in report.per_case:
            row = [r.case_id, f"{r.predicted_dice:.8f}", f"{r.fake_dice:.8f}",
                   f"{r.kl_term:.8f}",
                   "" if r.real_dice is None else f"{r.real_dice:.8f}"]
            if has_alarm:
                row.append("" if r.alarm is None else int(r.alarm))
            writer.writerow(row)


def write_scatter_csv(report: AssessmentReport, path: str | Path) -> None:
    """Predicted-vs-real pairs for external plotting; rows without ground
    truth are skipped."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["predicted_dice", "real_dice"])
        for r in report.per_case:
            if r.real_dice is not None:
                writer.writerow([f"{r.predicted_dice:.8f}", f"{r.real_dice:.8f}"])


def comparison_table(rows: Sequence[tuple[str, Aggregate]]) -> str:
    """Side-by-side method table in the standard MAE/STD/P.C./S.C. layout."""
    lines = [f"{'Method':<24} {'MAE':>8} {'STD':>8} {'P.C.':>8} {'S.C.':>8}"]
    lines.append("-" * len(lines[0]))
    for name, agg in rows:
        lines.append(f"{name:<24} {agg.mae:>8.2f} {agg.std_residual:>8.2f} "
                     f"{agg.pearson:>8.2f} {agg.spearman:>8.2f}")
    return "\n".join(lines)


def write_comparison_csv(rows: Sequence[tuple[str, Aggregate]], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "mae", "std", "pearson", "spearman"])
        for name, agg in rows:
            writer.writerow([name, f"{agg.mae:.4f}", f"{agg.std_residual:.4f}",
                             f"{agg.pearson:.4f}", f"{agg.spearman:.4f}"])
