"""Agreement and classification metrics for the nine-class rating scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import N_CLASSES
from .errors import DataError, NumericError


def _labels(y, n_classes: int) -> np.ndarray:
    a = np.asarray(y)
    if a.ndim != 1:
        raise DataError("labels must be one-dimensional")
    if a.size and (not np.issubdtype(a.dtype, np.integer)):
        if not np.all(a == np.round(a)):
            raise DataError("labels must be integers")
        a = a.astype(np.int64)
    if a.size and (a.min() < 0 or a.max() >= n_classes):
        raise DataError(f"labels must lie in 0..{n_classes - 1}")
    return a.astype(np.int64)


def confusion(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts matrix: row = true class, column = predicted class."""
    t, p = _labels(y_true, n_classes), _labels(y_pred, n_classes)
    if t.shape != p.shape:
        raise DataError("y_true and y_pred differ in length")
    return np.bincount(t * n_classes + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def qwk(y_true, y_pred, n_classes: int = N_CLASSES) -> float:
    """Cohen's kappa with quadratic disagreement weights.

    ``1 - sum(w * O) / sum(w * E)`` where ``O`` is the observed count matrix,
    ``E`` the outer product of the two marginals rescaled to the same total,
    and ``w[i, j] = (i - j)^2 / (n - 1)^2``.

    When ``sum(w * E) == 0`` (both raters constant on the same class) the
    result is defined as 1.0 for a diagonal ``O``.
    """
    t, p = _labels(y_true, n_classes), _labels(y_pred, n_classes)
    if t.size == 0 or t.shape != p.shape:
        raise DataError("qwk needs two non-empty label vectors of equal length")
    if n_classes < 2:
        raise DataError("qwk needs at least two classes")
    O = confusion(t, p, n_classes).astype(float)
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / O.sum()
    idx = np.arange(n_classes)
    W = (idx[:, None] - idx[None, :]) ** 2 / (n_classes - 1) ** 2
    den = float((W * E).sum())
    num = float((W * O).sum())
    if den == 0.0:
        if num == 0.0:
            return 1.0
        raise NumericError("qwk undefined: zero expected disagreement with off-diagonal observations")
    return 1.0 - num / den


@dataclass(frozen=True)
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray

    def to_dict(self, names=None) -> dict:
        names = list(names) if names is not None else [str(i) for i in range(len(self.support))]
        return {
            "classes": names,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "support": self.support.tolist(),
        }


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def class_metrics(cm: np.ndarray) -> ClassMetrics:
    """Per-class precision, recall and F1; any 0/0 is reported as 0.0."""
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return ClassMetrics(precision, recall, f1, cm.sum(axis=1).astype(np.int64))


def accuracy(cm: np.ndarray) -> float:
    return float(np.trace(cm) / cm.sum())
