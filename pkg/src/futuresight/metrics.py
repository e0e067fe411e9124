"""Evaluation metrics: regression distances, top-1 accuracy, average precision."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np


def _check_pair(preds, targets):
    P = np.asarray(preds, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if P.shape[0] == 0:
        raise ValueError("no samples")
    return P, T


def mean_euclidean_distance(preds, targets) -> float:
    """Mean over samples of the (non-squared) norm ||pred - target||."""
    P, T = _check_pair(preds, targets)
    if P.shape != T.shape or P.ndim != 2:
        raise ValueError(f"count/dim mismatch: {P.shape} vs {T.shape}")
    return float(np.mean(np.linalg.norm(P - T, axis=1)))


def min_over_k_distance(k_preds, targets) -> float:
    """Mean over samples of the distance from the target to its closest prediction.

    k_preds has shape (N, K, d).
    """
    P, T = _check_pair(k_preds, targets)
    if P.ndim != 3 or T.ndim != 2 or P.shape[0] != T.shape[0] or P.shape[2] != T.shape[1] or P.shape[1] < 1:
        raise ValueError(f"count/dim mismatch: {P.shape} vs {T.shape}")
    return float(np.mean(np.min(np.linalg.norm(P - T[:, None, :], axis=2), axis=1)))


def top1_accuracy(predicted, truth) -> float:
    if len(predicted) != len(truth):
        raise ValueError(f"{len(predicted)} predictions for {len(truth)} labels")
    if len(truth) == 0:
        raise ValueError("no samples")
    return sum(p == t for p, t in zip(predicted, truth)) / len(truth)


def average_precision(scores, labels) -> float:
    """Mean precision at the rank of each positive; ties keep the input order."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    if not y.any():
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


@dataclass
class MetricReport:
    n_samples: int
    mean_euclidean_distance: float
    mean_min_over_k_distance: float
    top1_accuracy: float | None = None
    per_category_ap: dict[str, float] = field(default_factory=dict)
    mean_ap: float | None = None
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.n_samples, repr(self.mean_euclidean_distance), repr(self.mean_min_over_k_distance),
                    "" if self.top1_accuracy is None else repr(self.top1_accuracy),
                    "" if self.mean_ap is None else repr(self.mean_ap)])
        return buf.getvalue()


CSV_HEADER = "n_samples,mean_euclidean_distance,mean_min_over_k_distance,top1_accuracy,mean_ap\n"

REPORT_SCHEMA = {
    "type": "object",
    "required": ["n_samples", "mean_euclidean_distance", "mean_min_over_k_distance",
                 "top1_accuracy", "per_category_ap", "mean_ap", "config"],
    "additionalProperties": False,
    "properties": {
        "n_samples": {"type": "integer", "minimum": 1},
        "mean_euclidean_distance": {"type": "number", "minimum": 0},
        "mean_min_over_k_distance": {"type": "number", "minimum": 0},
        "top1_accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "per_category_ap": {"type": "object",
                            "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
        "mean_ap": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "config": {"type": "object"},
    },
}


def build_report(k_preds: np.ndarray, targets: np.ndarray, predicted_categories=None, true_categories=None,
                 category_scores: np.ndarray | None = None, category_truth: np.ndarray | None = None,
                 categories: list[str] | None = None, config: dict | None = None) -> MetricReport:
    """Assemble a report from (N, K, d) predictions.

    The point prediction used for mean_euclidean_distance is the average of
    the K predictions. AP is computed for every category with at least one
    positive; mean_ap averages those categories.
    """
    k_preds = np.asarray(k_preds, dtype=np.float64)
    report = MetricReport(
        n_samples=int(len(targets)),
        mean_euclidean_distance=mean_euclidean_distance(k_preds.mean(axis=1), targets),
        mean_min_over_k_distance=min_over_k_distance(k_preds, targets),
        config=config or {},
    )
    if predicted_categories is not None:
        report.top1_accuracy = top1_accuracy(predicted_categories, true_categories)
    if category_scores is not None:
        aps = {}
        for j, name in enumerate(categories):
            if category_truth[:, j].any():
                aps[name] = average_precision(category_scores[:, j], category_truth[:, j])
        report.per_category_ap = aps
        report.mean_ap = float(np.mean(list(aps.values()))) if aps else None
    return report
