"""Multi-label evaluation metrics: Hamming loss and micro-averaged P/R/F1.

All metrics operate on decided binary label matrices of shape (N, M),
never on probabilities. Zero-denominator cases report 0.0 and set the
``degenerate`` flag instead of producing NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np


@dataclass
class MetricsReport:
    hamming_loss: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "MetricsReport":
        return cls(**json.loads(line))

    def as_table(self) -> str:
        """Human-readable table in HL, mP, mR, mF1 column order."""
        header = f"{'HL(-)':>10} {'mP(+)':>10} {'mR(+)':>10} {'mF1(+)':>10}"
        row = (
            f"{self.hamming_loss:>10.4f} {self.micro_precision:>10.3f} "
            f"{self.micro_recall:>10.3f} {self.micro_f1:>10.3f}"
        )
        return header + "\n" + row


def _check_shapes(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 2:
        raise ValueError(
            f"expected equal (N, M) shapes, got {y_true.shape} vs {y_pred.shape}"
        )
    return y_true.astype(np.int64), y_pred.astype(np.int64)


def hamming_loss(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Fraction of mismatched label slots over all N*M slots."""
    y_true, y_pred = _check_shapes(y_true, y_pred)
    return float(np.mean(y_true != y_pred))


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[int, int, int, int]:
    y_true, y_pred = _check_shapes(y_true, y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    return tp, fp, fn, tn


def micro_prf(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    """Micro-averaged precision/recall/F1 pooled over all label slots."""
    tp, fp, fn, tn = confusion_counts(y_true, y_pred)
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
        degenerate = degenerate or (tp + fp == 0 or tp + fn == 0)
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    n, m = np.asarray(y_true).shape
    hl = (fp + fn) / (n * m)
    return MetricsReport(
        hamming_loss=hl,
        micro_precision=precision,
        micro_recall=recall,
        micro_f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        degenerate=degenerate,
    )


def evaluate_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    """Full report (alias kept for pipeline readability)."""
    return micro_prf(y_true, y_pred)
