"""OOD-detection and calibration metrics.

Scores follow "higher means more likely out-of-distribution"; labels are
``True`` for OOD samples.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


def _split(scores, is_ood) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    is_ood = np.asarray(is_ood, dtype=bool)
    if scores.shape != is_ood.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1D and the same length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores, is_ood


def roc_auc(scores, is_ood) -> float:
    """Mann-Whitney AUC: P(ood > id) + 0.5 P(tie)."""
    scores, is_ood = _split(scores, is_ood)
    n_pos, n_neg = int(is_ood.sum()), int((~is_ood).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both OOD and in-distribution samples")
    ranks = rankdata(scores)  # midranks for ties
    return float((ranks[is_ood].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, is_ood) -> float:
    """Step-wise AP over distinct thresholds: sum of (delta recall) * precision."""
    scores, is_ood = _split(scores, is_ood)
    n_pos = int(is_ood.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one OOD sample")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], is_ood[order]
    tp = np.cumsum(y)
    # last index of every group of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_at, n_at = tp[ends], ends + 1
    recall = tp_at / n_pos
    precision = tp_at / n_at
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def fpr_at_95_tpr(scores, is_ood, tpr_level: float = 0.95) -> float:
    """Lowest FPR over thresholds ``score >= t`` whose TPR reaches ``tpr_level``."""
    scores, is_ood = _split(scores, is_ood)
    n_pos, n_neg = int(is_ood.sum()), int((~is_ood).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("FPR95 needs both OOD and in-distribution samples")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], is_ood[order]
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    ok = tp >= tpr_level * n_pos - 1e-12
    return float(np.min(fp[ok]) / n_neg)


def adaptive_calibration_error(confidence, correct, bins: int = 30) -> float:
    """Mean |accuracy - confidence| over equal-mass confidence bins.

    Samples are binned by confidence rank; tied confidences all fall into the
    bin of the lowest tied rank, so some bins may end up empty and are skipped.
    """
    confidence = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    if confidence.shape != correct.shape or confidence.ndim != 1:
        raise ValueError("confidence and correctness must be 1D and the same length")
    if np.any(confidence < 0) or np.any(confidence > 1):
        raise ValueError("confidence must lie in [0, 1]")
    n = len(confidence)
    if n < bins:
        raise ValueError(f"need at least {bins} samples for {bins} bins, got {n}")
    rank = rankdata(confidence, method="min").astype(np.int64) - 1
    which = rank * bins // n
    gaps = []
    for b in range(bins):
        mask = which == b
        if mask.any():
            gaps.append(abs(correct[mask].mean() - confidence[mask].mean()))
    return float(np.mean(gaps))


@dataclass
class MetricReport:
    dataset: str
    auc: float
    ap: float
    fpr95: float
    ace: float | None = None
    mean_mi_id: float | None = None
    mean_mi_ood: float | None = None
    accuracy: float | None = None

    @classmethod
    def from_scores(cls, dataset: str, id_scores, ood_scores, **extra) -> "MetricReport":
        scores = np.concatenate([id_scores, ood_scores])
        labels = np.r_[np.zeros(len(id_scores), bool), np.ones(len(ood_scores), bool)]
        return cls(dataset, roc_auc(scores, labels), average_precision(scores, labels),
                   fpr_at_95_tpr(scores, labels), mean_mi_id=float(np.mean(id_scores)),
                   mean_mi_ood=float(np.mean(ood_scores)), **extra)

    def to_dict(self) -> dict:
        return asdict(self)


def write_reports_csv(reports: list[MetricReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "auc", "ap", "fpr95"])
        for r in reports:
            writer.writerow([r.dataset, format(r.auc, ".17g"), format(r.ap, ".17g"), format(r.fpr95, ".17g")])
