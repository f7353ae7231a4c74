"""Classification and correlation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (empty mask, constant vector, ...)."""


def _masked(mask, n: int) -> np.ndarray:
    idx = np.arange(n) if mask is None else np.asarray(mask, dtype=np.int64)
    if idx.size == 0:
        raise UndefinedMetricError("mask selects no nodes")
    return idx


def accuracy(pred, truth, mask=None) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    idx = _masked(mask, len(truth))
    return float(np.mean(pred[idx] == truth[idx]))


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney estimate; tied scores count one half."""
    ranks = rankdata(scores)
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_class_auc(probs, truth, mask=None, num_classes: int | None = None) -> np.ndarray:
    """One-vs-rest AUC per class; NaN for classes absent from the mask."""
    probs, truth = np.asarray(probs, dtype=float), np.asarray(truth)
    idx = _masked(mask, len(truth))
    c = probs.shape[1] if num_classes is None else num_classes
    y, s = truth[idx], probs[idx]
    out = np.full(c, np.nan)
    for k in range(c):
        pos = y == k
        if 0 < pos.sum() < len(y):
            out[k] = _binary_auc(s[:, k], pos)
    return out


def macro_auc(probs, truth, mask=None) -> float:
    """Macro one-vs-rest ROC AUC over the classes present in the mask.

    A one-column ``probs`` is treated as the positive-class score of a
    binary problem.
    """
    probs = np.asarray(probs, dtype=float)
    truth = np.asarray(truth)
    idx = _masked(mask, len(truth))
    if len(np.unique(truth[idx])) < 2:
        raise UndefinedMetricError("AUC needs at least two classes in the mask")
    if probs.ndim == 1 or probs.shape[1] == 1:
        return _binary_auc(probs.reshape(-1)[idx], truth[idx] == 1)
    aucs = per_class_auc(probs, truth, idx)
    return float(np.nanmean(aucs))


def confusion(pred, truth, mask=None, num_classes: int | None = None) -> np.ndarray:
    pred, truth = np.asarray(pred), np.asarray(truth)
    idx = _masked(mask, len(truth))
    c = int(max(pred.max(), truth.max()) + 1) if num_classes is None else num_classes
    cm = np.zeros((c, c), dtype=np.int64)
    np.add.at(cm, (truth[idx], pred[idx]), 1)
    return cm


def per_class_f1(pred, truth, mask=None, num_classes: int | None = None) -> np.ndarray:
    cm = confusion(pred, truth, mask, num_classes)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); zero when the class is never hit
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(pred, truth, mask=None, num_classes: int | None = None) -> float:
    return float(per_class_f1(pred, truth, mask, num_classes).mean())


def micro_f1(pred, truth, mask=None, num_classes: int | None = None) -> float:
    cm = confusion(pred, truth, mask, num_classes)
    tp = np.trace(cm)
    fp = cm.sum() - tp
    fn = fp
    return float(2 * tp / (2 * tp + fp + fn))


def pearson(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two vectors of equal length")
    if len(x) < 3:
        raise UndefinedMetricError("correlation needs at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise UndefinedMetricError("correlation is undefined for a constant vector")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 3:
        raise UndefinedMetricError("correlation needs at least 3 points")
    return pearson(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    auc: float
    f1: float
    per_class_f1: tuple[float, ...]
    per_class_auc: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "acc": self.accuracy,
            "auc": self.auc,
            "f1": self.f1,
            "per_class": {
                "f1": list(self.per_class_f1),
                "auc": [None if np.isnan(a) else a for a in self.per_class_auc],
            },
        }


def evaluate(probs, truth, mask=None) -> EvalReport:
    """ACC, macro AUC and macro F1 on the masked nodes.

    AUC falls back to 0.5 when the mask holds a single class, so that a
    report can always be produced.
    """
    probs = np.asarray(probs, dtype=float)
    c = probs.shape[1]
    pred = np.argmax(probs, axis=1)
    try:
        auc = macro_auc(probs, truth, mask)
    except UndefinedMetricError:
        auc = 0.5
    return EvalReport(
        accuracy=accuracy(pred, truth, mask),
        auc=auc,
        f1=macro_f1(pred, truth, mask, c),
        per_class_f1=tuple(per_class_f1(pred, truth, mask, c).tolist()),
        per_class_auc=tuple(per_class_auc(probs, truth, mask, c).tolist()),
    )
