"""Quality-assessment metrics, reported on the 0-100 percent scale to match
the usual comparison-table convention.

STD is the population standard deviation of residuals (not sample); ties in
Spearman get average ranks.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedCorrelationError


def _as_pair(pred, real, name: str) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    r = np.asarray(real, dtype=np.float64)
    if p.ndim != 1 or r.ndim != 1:
        raise ValueError(f"{name} expects 1D sequences")
    if p.shape != r.shape:
        raise ValueError(f"{name}: length mismatch {p.shape[0]} vs {r.shape[0]}")
    if p.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 values")
    return p, r


def mae(pred, real) -> float:
    """Mean absolute error of predictions, x100."""
    p, r = _as_pair(pred, real, "mae")
    return 100.0 * float(np.abs(p - r).mean())


def std_residual(pred, real) -> float:
    """Population standard deviation of the residuals pred - real, x100."""
    p, r = _as_pair(pred, real, "std_residual")
    return 100.0 * float((p - r).std())


def pearson(x, y) -> float:
    """Sample Pearson correlation, x100."""
    a, b = _as_pair(x, y, "pearson")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = float(np.sqrt((ac @ ac) * (bc @ bc)))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return 100.0 * float(ac @ bc) / denom


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation (Pearson of average-tied ranks), x100."""
    a, b = _as_pair(x, y, "spearman")
    return pearson(average_ranks(a), average_ranks(b))
