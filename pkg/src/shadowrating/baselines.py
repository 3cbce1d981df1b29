"""Linear regression and one-vs-rest logistic regression baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import N_CLASSES, RatingClass
from .errors import DataError, NumericError, SchemaError

RIDGE = 1e-8
ABSENT_LOGIT = -1e9
FORMAT = "shadowrating.baseline"
FORMAT_VERSION = 1


def _finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values in model inputs")


def rmse(pred, y) -> float:
    pred, y = np.asarray(pred, dtype=float), np.asarray(y, dtype=float)
    if pred.shape != y.shape or pred.size == 0:
        raise DataError("rmse needs two non-empty vectors of equal length")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": FORMAT_VERSION, "kind": "linear",
                "weights": self.weights.tolist(), "bias": self.bias}


def fit_linear(X, y, ridge: float = RIDGE) -> LinearModel:
    """Least squares via the normal equations with ``ridge`` added on the diagonal."""
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=float)
    _finite(X, y)
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    G = A.T @ A + ridge * np.eye(A.shape[1])
    theta = np.linalg.solve(G, A.T @ y)
    return LinearModel(theta[:-1].copy(), float(theta[-1]))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass
class OvrLogisticModel:
    weights: np.ndarray  # (n_features, n_classes)
    bias: np.ndarray  # (n_classes,)
    trained: np.ndarray  # (n_classes,) bool

    def logits(self, X) -> np.ndarray:
        z = np.asarray(X, dtype=float) @ self.weights + self.bias
        z[:, ~self.trained] = ABSENT_LOGIT
        return z

    def scores(self, X) -> np.ndarray:
        """Per-class sigmoid scores; rows are not normalised to sum to one."""
        return sigmoid(self.logits(X))

    def predict(self, X) -> np.ndarray:
        # argmax on logits: same order as the sigmoid scores, no saturation ties
        return argmax_lowest(self.logits(X))

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": FORMAT_VERSION, "kind": "logistic",
                "weights": self.weights.tolist(), "bias": self.bias.tolist(),
                "trained": self.trained.tolist()}


def argmax_lowest(scores) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest class index (better rating)."""
    return np.argmax(np.asarray(scores), axis=1).astype(np.int64)


def fit_ovr_logistic(X, y, l2: float = 0.0, n_classes: int = N_CLASSES, max_iter: int = 2000,
                     step: float = 0.1, tol: float = 1e-6) -> OvrLogisticModel:
    """One binary logistic regression per class, by full-batch gradient descent.

    Each classifier minimises mean binary cross-entropy plus
    ``l2 / 2 * ||w||^2`` and stops once its gradient infinity-norm drops
    below ``tol`` or after ``max_iter`` steps. Classes missing from ``y``
    get a constant, very negative logit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    _finite(X)
    if len(np.unique(y)) < 2:
        raise DataError("one-vs-rest logistic regression needs at least two distinct labels")
    m, d = X.shape
    Y = (y[:, None] == np.arange(n_classes)[None, :]).astype(float)
    trained = Y.sum(axis=0) > 0
    W = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    active = trained.copy()
    for _ in range(max_iter):
        if not active.any():
            break
        cols = np.flatnonzero(active)
        R = sigmoid(X @ W[:, cols] + b[cols]) - Y[:, cols]
        gW = X.T @ R / m + l2 * W[:, cols]
        gb = R.mean(axis=0)
        gnorm = np.maximum(np.abs(gW).max(axis=0, initial=0.0), np.abs(gb))
        done = gnorm < tol
        upd = cols[~done]
        W[:, upd] -= step * gW[:, ~done]
        b[upd] -= step * gb[~done]
        active[cols[done]] = False
    _finite(W, b)
    return OvrLogisticModel(W, b, trained)


def predict_ovr(model: OvrLogisticModel, x) -> RatingClass:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return RatingClass(int(model.predict(x)[0]))


def model_from_dict(d: dict):
    if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
        raise SchemaError(f"not a {FORMAT} v{FORMAT_VERSION} artifact")
    if d["kind"] == "linear":
        return LinearModel(np.asarray(d["weights"], dtype=float), float(d["bias"]))
    if d["kind"] == "logistic":
        return OvrLogisticModel(np.asarray(d["weights"], dtype=float), np.asarray(d["bias"], dtype=float),
                                np.asarray(d["trained"], dtype=bool))
    raise SchemaError(f"unknown baseline kind {d['kind']!r}")
