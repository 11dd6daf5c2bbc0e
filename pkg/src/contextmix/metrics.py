"""Evaluation metrics: top-k error, confusion matrices, macro F1, Mean IR, ECE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class PredictionSet:
    """True class indices ``(N,)`` and raw scores ``(N, K)``."""

    true_class: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.true_class = np.asarray(self.true_class, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.true_class.shape[0]:
            raise ValueError(f"scores {self.scores.shape} do not match {self.true_class.shape[0]} samples")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    @property
    def n_classes(self) -> int:
        return self.scores.shape[1]

    def predicted(self) -> np.ndarray:
        # argmax already returns the lowest index on ties
        return self.scores.argmax(axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def topk_error(preds: PredictionSet, k: int) -> float:
    """Fraction of samples whose true class is not among the top ``k`` scores.

    Ties rank the lower class index first.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(preds.true_class) == 0:
        raise ValueError("no predictions")
    order = np.argsort(-preds.scores, axis=1, kind="stable")[:, :k]
    hit = (order == preds.true_class[:, None]).any(axis=1)
    return float(1.0 - hit.mean())


def confusion_matrix(true_class: Sequence[int], predicted: Sequence[int], n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true_class), np.asarray(predicted)), 1)
    return cm


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.size == 0:
        raise ValueError(f"confusion matrix must be square and non-empty, got shape {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix counts must be non-negative")
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        # classes with P + R = 0 score zero
        return np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1 = 2PR / (P + R)."""
    return float(per_class_f1(cm).mean())


def mean_ir(class_counts: Sequence[int]) -> float:
    """Mean imbalance ratio: average of ``max_count / count`` over classes.

    1.0 for a perfectly balanced dataset.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("no class counts")
    if np.any(counts <= 0):
        raise ValueError("every class needs a positive count")
    return float(np.mean(counts.max() / counts))


def ece(preds: PredictionSet, n_bins: int = 15, probabilities: bool = False) -> float:
    """Expected calibration error over equal-width confidence bins.

    Scores go through a softmax unless ``probabilities`` is set. Bin ``b``
    holds confidences in ``(b/n, (b+1)/n]``; bin 0 also takes confidence 0.
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    n = len(preds.true_class)
    if n == 0:
        raise ValueError("no predictions")
    probs = preds.scores if probabilities else softmax(preds.scores)
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == preds.true_class).astype(np.float64)
    bins = np.clip(np.ceil(conf * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    gap = conf - correct
    total = 0.0
    for b in range(n_bins):
        members = bins == b
        if members.any():
            # (n_b / n) * |acc_b - conf_b| written as a single sum of per-sample gaps
            total += abs(gap[members].sum()) / n
    return float(total)


def summarize(preds: PredictionSet, n_bins: int = 15) -> dict:
    """Top-1/top-5 error, macro F1 and ECE as a flat dict."""
    k = preds.n_classes
    cm = confusion_matrix(preds.true_class, preds.predicted(), k)
    return {
        "n": int(len(preds.true_class)),
        "top1_error": topk_error(preds, 1),
        "top5_error": topk_error(preds, min(5, k)),
        "macro_f1": macro_f1(cm),
        "ece": ece(preds, n_bins),
    }
