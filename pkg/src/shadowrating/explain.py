"""Shapley-value attributions over groups of transformed feature columns.

A coalition ``S`` of feature groups is valued as the mean model output over
the background rows, with the columns of groups in ``S`` taken from the
explained row and every other column from the background row::

    v(S) = mean_b f(x_S, bg_b[not S])

``shap_exact`` enumerates all ``2^n`` coalitions (n <= 12). ``shap_kernel``
solves the Shapley-kernel weighted least-squares problem on a sampled set of
coalitions, with efficiency (``base + sum(phi) == prediction``) imposed as a
hard constraint.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_streams
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

MAX_EXACT_GROUPS = 12
DEFAULT_SAMPLES = 2048
DEFAULT_BACKGROUND = 16


@dataclass
class ShapExplanation:
    base_value: float
    phis: np.ndarray
    prediction: float
    feature_names: list[str]
    feature_values: list
    imputed: list[bool] = field(default_factory=list)
    method: str = "exact"

    @property
    def additivity_error(self) -> float:
        return abs(self.base_value + float(np.sum(self.phis)) - self.prediction)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "base_value": self.base_value,
            "prediction": self.prediction,
            "feature_names": list(self.feature_names),
            "feature_values": list(self.feature_values),
            "phis": [float(p) for p in self.phis],
            "imputed": list(self.imputed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapExplanation":
        return cls(float(d["base_value"]), np.asarray(d["phis"], dtype=float), float(d["prediction"]),
                   list(d["feature_names"]), list(d["feature_values"]), list(d.get("imputed", [])),
                   d.get("method", "exact"))


def _default_groups(d: int) -> list[tuple[str, list[int]]]:
    return [(f"x{j}", [j]) for j in range(d)]


def _prepare(x, bg, groups):
    x = np.asarray(x, dtype=float).ravel()
    bg = np.atleast_2d(np.asarray(bg, dtype=float))
    if bg.shape[0] == 0:
        raise DataError("background set is empty")
    if bg.shape[1] != x.size:
        raise DataError("background rows and explained row differ in width")
    groups = _default_groups(x.size) if groups is None else [(n, list(c)) for n, c in groups]
    return x, bg, groups


def _default_values(x, groups) -> list:
    return [float(x[cols[0]]) if len(cols) == 1 else [float(x[c]) for c in cols] for _, cols in groups]


def coalition_values(f: Predictor, x: np.ndarray, bg: np.ndarray, groups, masks: np.ndarray,
                     chunk_rows: int = 65536) -> np.ndarray:
    """``v(S)`` for each boolean row of ``masks`` (coalitions over groups)."""
    n_bg, d = bg.shape
    col_of = np.zeros((len(groups), d), dtype=bool)
    for g, (_, cols) in enumerate(groups):
        col_of[g, cols] = True
    out = np.empty(len(masks))
    per_chunk = max(1, chunk_rows // n_bg)
    for s in range(0, len(masks), per_chunk):
        m = masks[s:s + per_chunk]
        colmask = (m.astype(np.int64) @ col_of.astype(np.int64)) > 0  # (c, d)
        rows = np.where(colmask[:, None, :], x[None, None, :], bg[None, :, :]).reshape(-1, d)
        out[s:s + per_chunk] = np.asarray(f(rows), dtype=float).reshape(len(m), n_bg).mean(axis=1)
    return out


def _endpoints(f, x, bg):
    base = float(np.mean(np.asarray(f(bg), dtype=float)))
    pred = float(np.asarray(f(x[None, :]), dtype=float)[0])
    return base, pred


def shap_exact(f: Predictor, x, bg, groups=None, feature_values=None, imputed=None) -> ShapExplanation:
    """Exact Shapley values by enumerating every coalition of feature groups."""
    x, bg, groups = _prepare(x, bg, groups)
    n = len(groups)
    if n > MAX_EXACT_GROUPS:
        raise ConfigError(f"{n} feature groups exceed the exact limit of {MAX_EXACT_GROUPS}; use shap_kernel")
    base, pred = _endpoints(f, x, bg)
    codes = np.arange(1 << n)
    masks = ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    v = np.empty(1 << n)
    if n:
        v[1:-1] = coalition_values(f, x, bg, groups, masks[1:-1]) if n > 1 else []
    v[0], v[-1] = base, pred
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)])
    phis = np.zeros(n)
    for j in range(n):
        without = codes[~masks[:, j]]
        phis[j] = np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return ShapExplanation(base, phis, pred, [g for g, _ in groups],
                           feature_values if feature_values is not None else _default_values(x, groups),
                           list(imputed) if imputed is not None else [False] * n, "exact")


def _kernel_samples(M: int, n_samples: int, rng: np.random.Generator):
    """Coalition masks and kernel weights, enumerating whole sizes when affordable.

    Sizes ``s`` and ``M - s`` are handled as pairs. Starting from the sizes
    with the largest Shapley-kernel mass, a size is enumerated completely if
    the remaining budget covers it; the rest of the budget is drawn at random
    with probability proportional to the kernel mass, duplicates adding to
    the weight of the earlier draw.
    """
    n_sizes = (M - 1 + 1) // 2  # ceil((M-1)/2)
    n_paired = (M - 1) // 2
    size_w = np.array([(M - 1) / (s * (M - s)) for s in range(1, n_sizes + 1)])
    size_w[:n_paired] *= 2
    size_w /= size_w.sum()

    masks: list[np.ndarray] = []
    weights: list[float] = []
    left = n_samples
    remaining = size_w.copy()
    n_full = 0
    for s in range(1, n_sizes + 1):
        count = math.comb(M, s) * (2 if s <= n_paired else 1)
        if left * remaining[s - 1] / count < 1.0 - 1e-8:
            break
        n_full += 1
        left -= count
        if remaining[s - 1] < 1.0:
            remaining = remaining / (1.0 - remaining[s - 1])
        w = size_w[s - 1] / math.comb(M, s)
        if s <= n_paired:
            w /= 2.0
        for inds in itertools.combinations(range(M), s):
            m = np.zeros(M, dtype=bool)
            m[list(inds)] = True
            masks.append(m)
            weights.append(w)
            if s <= n_paired:
                masks.append(~m)
                weights.append(w)

    n_fixed = len(masks)
    if n_full < n_sizes and left > 0:
        probs = size_w.copy()
        probs[:n_paired] /= 2
        probs = probs[n_full:]
        probs /= probs.sum()
        draws = rng.choice(len(probs), 4 * left, p=probs)
        seen: dict[bytes, int] = {}
        for k in draws:
            if left <= 0:
                break
            s = int(k) + n_full + 1
            m = np.zeros(M, dtype=bool)
            m[rng.permutation(M)[:s]] = True
            key = m.tobytes()
            fresh = key not in seen
            if fresh:
                seen[key] = len(masks)
                masks.append(m)
                weights.append(1.0)
                left -= 1
            else:
                weights[seen[key]] += 1.0
            if s <= n_paired and (left > 0 or not fresh):
                if fresh:
                    masks.append(~m)
                    weights.append(1.0)
                    left -= 1
                else:
                    weights[seen[key] + 1] += 1.0
        tail = np.asarray(weights[n_fixed:])
        if tail.size:
            tail *= size_w[n_full:].sum() / tail.sum()
            weights[n_fixed:] = tail.tolist()
    return np.array(masks, dtype=bool).reshape(-1, M), np.asarray(weights, dtype=float)


def shap_kernel(f: Predictor, x, bg, groups=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                feature_values=None, imputed=None) -> ShapExplanation:
    """Kernel-weighted Shapley approximation; deterministic for a given ``seed``."""
    x, bg, groups = _prepare(x, bg, groups)
    M = len(groups)
    if n_samples < 2 * M + 2:
        raise ConfigError(f"n_samples must be at least 2*n_features+2 = {2 * M + 2}")
    base, pred = _endpoints(f, x, bg)
    names = [g for g, _ in groups]
    values = feature_values if feature_values is not None else _default_values(x, groups)
    imp = list(imputed) if imputed is not None else [False] * M
    if M == 0:
        return ShapExplanation(base, np.zeros(0), pred, names, values, imp, "kernel")
    if M == 1:
        return ShapExplanation(base, np.array([pred - base]), pred, names, values, imp, "kernel")

    budget = min(n_samples - 2, (1 << M) - 2)
    masks, w = _kernel_samples(M, budget, rng_streams.stream(seed, rng_streams.SHAP))
    v = coalition_values(f, x, bg, groups, masks)
    Z = masks.astype(float)
    total = pred - base
    # eliminate the last group through the efficiency constraint
    y = (v - base) - Z[:, -1] * total
    A = Z[:, :-1] - Z[:, -1:]
    AtW = A.T * w
    G = AtW @ A
    rhs = AtW @ y
    try:
        if np.linalg.cond(G) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned")
        sol = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        log.warning("kernel SHAP system is singular; adding 1e-10 ridge")
        sol = np.linalg.solve(G + 1e-10 * np.eye(len(G)), rhs)
    phis = np.append(sol, total - sol.sum())
    return ShapExplanation(base, phis, pred, names, values, imp, "kernel")


# ------------------------------------------------------------------ background


def select_background(X: np.ndarray, labels, size: int = DEFAULT_BACKGROUND, seed: int = 0) -> np.ndarray:
    """Row indices of a class-stratified background sample of ``size`` rows."""
    y = np.asarray(labels)
    n = len(y)
    if n == 0:
        raise DataError("cannot draw a background from an empty set")
    size = min(size, n)
    g = rng_streams.stream(seed, rng_streams.BACKGROUND)
    classes, counts = np.unique(y, return_counts=True)
    quota = counts * size / n
    alloc = np.floor(quota).astype(int)
    for i in np.argsort(-(quota - alloc), kind="stable")[: size - alloc.sum()]:
        alloc[i] += 1
    picks = [g.choice(np.flatnonzero(y == c), a, replace=False) for c, a in zip(classes, alloc) if a]
    return np.sort(np.concatenate(picks)) if picks else np.zeros(0, dtype=np.int64)


# --------------------------------------------------------------------- outputs


def force_plot_data(e: ShapExplanation) -> dict:
    """Signed contributions ordered by magnitude, plus base and prediction."""
    order = sorted(range(len(e.phis)), key=lambda j: (-abs(float(e.phis[j])), j))
    arrows = [
        {
            "feature": e.feature_names[j],
            "value": e.feature_values[j],
            "shap": float(e.phis[j]),
            "sign": "+" if e.phis[j] > 0 else "-",
            "imputed": bool(e.imputed[j]) if e.imputed else False,
        }
        for j in order
        if e.phis[j] != 0
    ]
    return {"base_value": e.base_value, "prediction": e.prediction, "contributions": arrows}


@dataclass(frozen=True)
class ImportanceTable:
    features: list[str]
    values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap"])
        for f, v in zip(self.features, self.values):
            w.writerow([f, repr(float(v))])
        return buf.getvalue()


def _check_space(explanations: Sequence[ShapExplanation]) -> list[str]:
    if not explanations:
        raise DataError("no explanations given")
    names = list(explanations[0].feature_names)
    for e in explanations[1:]:
        if list(e.feature_names) != names:
            raise DataError("explanations come from different feature spaces")
    return names


def importance(explanations: Sequence[ShapExplanation]) -> ImportanceTable:
    """Mean absolute Shapley value per feature, descending (ties keep input order)."""
    names = _check_space(explanations)
    mean_abs = np.mean(np.abs(np.vstack([e.phis for e in explanations])), axis=0)
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], j))
    return ImportanceTable([names[j] for j in order], mean_abs[order])


def _colour(values: list) -> np.ndarray:
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        a = np.asarray(values, dtype=float)
    else:  # categorical values: position in the sorted set of labels
        labels = sorted({json.dumps(v, sort_keys=True) for v in values})
        a = np.array([labels.index(json.dumps(v, sort_keys=True)) for v in values], dtype=float)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.full(a.shape, 0.5)
    return (a - lo) / (hi - lo)


def summary_plot_data(explanations: Sequence[ShapExplanation]) -> list[tuple[str, float, float]]:
    """``(feature, shap value, colour in [0, 1])`` rows, features by importance."""
    names = _check_space(explanations)
    table = importance(explanations)
    rows = []
    for name in table.features:
        j = names.index(name)
        colours = _colour([e.feature_values[j] for e in explanations])
        rows += [(name, float(e.phis[j]), float(c)) for e, c in zip(explanations, colours)]
    return rows


def summary_csv(rows: Sequence[tuple[str, float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "shap_value", "feature_value_normalised"])
    for name, phi, c in rows:
        w.writerow([name, repr(phi), repr(c)])
    return buf.getvalue()
