"""Stratified K-fold evaluation of the four model kinds.

For each fold the pipeline is fitted on the training side only; neural
models carve a stratified 20 % early-stopping split out of that same
training side, so held-out rows never influence fitting in any way.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import preprocess
from . import rng as rng_streams
from .baselines import fit_linear, fit_ovr_logistic, model_from_dict
from .domain import CLASS_NAMES, N_CLASSES, discretize_array
from .errors import ConfigError, DataError, ShadowRatingError
from .ingest import Dataset
from .metrics import class_metrics, confusion, qwk
from .net import Network
from .preprocess import FeatureMatrix, FittedPipeline
from .train import TrainConfig, TrainReport, new_network, train_model

log = logging.getLogger(__name__)

MODEL_KINDS = ("ann_emb", "ann", "linear", "logistic")
INNER_FOLDS = 5  # one of five stratified parts -> 20 % early-stopping split


# ------------------------------------------------------------------ fold plans


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[np.ndarray, ...]
    seed: int

    def train_indices(self, fold: int) -> np.ndarray:
        return np.sort(np.concatenate([f for i, f in enumerate(self.folds) if i != fold]))

    def test_indices(self, fold: int) -> np.ndarray:
        return self.folds[fold]


def stratified_folds(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class with a seeded generator and deal it round-robin.

    Dealing continues from fold to fold across classes, so per-class counts
    differ by at most one between folds and fold sizes stay balanced.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ConfigError("K must be >= 2")
    if k > len(y):
        raise ConfigError(f"K={k} exceeds the number of rows ({len(y)})")
    g = rng_streams.stream(seed, rng_streams.FOLDS)
    buckets: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            log.warning("class %r has %d rows, fewer than K=%d folds", c.item(), len(idx), k)
        for i in g.permutation(idx):
            buckets[cursor % k].append(int(i))
            cursor += 1
    return FoldPlan(k, tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), seed)


# ---------------------------------------------------------------- fitted models


@dataclass(frozen=True)
class EvalConfig:
    k: int = 5
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    logistic_l2: float = 1e-4

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "train": self.train.to_dict(), "logistic_l2": self.logistic_l2}


def text_mode_for(kind: str) -> str:
    return "embed" if kind == "ann_emb" else "onehot"


@dataclass
class FittedModel:
    """A pipeline plus the model trained on its features."""

    kind: str
    pipeline: FittedPipeline
    model: object
    report: TrainReport | None = None

    def predict_scores(self, fm: FeatureMatrix) -> np.ndarray:
        """Continuous 0..8 output (the predicted class index for ``logistic``)."""
        if self.kind in ("ann_emb", "ann"):
            return self.model.predict(fm.dense, fm.token_seqs if self.model.embedding is not None else None)
        if self.kind == "linear":
            return self.model.predict(fm.dense)
        return self.model.predict(fm.dense).astype(float)

    def predict_classes(self, fm: FeatureMatrix) -> np.ndarray:
        if self.kind == "logistic":
            return self.model.predict(fm.dense)
        return discretize_array(self.predict_scores(fm))

    def combined_predictor(self, n_dense: int):
        """Predictor over :meth:`FeatureMatrix.combined` rows (for attribution)."""

        def f(Xc: np.ndarray) -> np.ndarray:
            dense = Xc[:, :n_dense]
            tokens = np.rint(Xc[:, n_dense:]).astype(np.int64)
            fm = FeatureMatrix(dense, tokens, [], [], np.zeros(dense.shape, dtype=bool))
            return self.predict_scores(fm)

        return f

    def model_dict(self) -> dict:
        return self.model.to_dict()

    @staticmethod
    def model_from_dict(kind: str, d: dict):
        return Network.from_dict(d) if kind in ("ann_emb", "ann") else model_from_dict(d)


def inner_split(targets: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions (into ``targets``) of the inner train and early-stopping parts."""
    plan = stratified_folds(targets, INNER_FOLDS, rng_streams.fold_seed(seed, 0x5EED))
    return plan.train_indices(0), plan.test_indices(0)


def fit_model(kind: str, data: Dataset, cfg: EvalConfig, seed: int, fitted_on: str = "") -> tuple[FittedModel, dict]:
    """Fit pipeline + model on all of ``data``.

    Returns the fitted model and the positions used for the inner
    train/early-stopping split (empty for the linear baselines).
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    pipe = preprocess.fit(data, text_mode_for(kind), fitted_on=fitted_on)
    fm = preprocess.transform(pipe, data)
    y = data.targets
    split = {"inner_train": np.arange(data.n_rows), "inner_val": np.zeros(0, dtype=np.int64)}
    if kind == "linear":
        return FittedModel(kind, pipe, fit_linear(fm.dense, y)), split
    if kind == "logistic":
        return FittedModel(kind, pipe, fit_ovr_logistic(fm.dense, y, cfg.logistic_l2)), split
    tr, va = inner_split(y, seed)
    split = {"inner_train": tr, "inner_val": va}
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    net = new_network(tcfg, pipe.n_dense, pipe.vocab_size, pipe.max_len)
    net, report = train_model(net, (fm.rows(tr), y[tr]), (fm.rows(va), y[va]), tcfg)
    return FittedModel(kind, pipe, net, report), split


# ------------------------------------------------------------------- evaluation


@dataclass
class FoldResult:
    fold: int
    test_idx: np.ndarray
    train_idx: np.ndarray
    inner_train_idx: np.ndarray
    inner_val_idx: np.ndarray
    predictions: np.ndarray
    qwk: float
    confusion: np.ndarray
    train_report: TrainReport | None
    pipeline: FittedPipeline


def run_fold(data: Dataset, plan: FoldPlan, fold: int, kind: str, cfg: EvalConfig) -> FoldResult:
    train_idx, test_idx = plan.train_indices(fold), plan.test_indices(fold)
    seed = rng_streams.fold_seed(cfg.seed, fold)
    model, split = fit_model(kind, data.subset(train_idx), cfg, seed, fitted_on=f"fold{fold}")
    test = data.subset(test_idx)
    pred = model.predict_classes(preprocess.transform(model.pipeline, test))
    return FoldResult(
        fold=fold,
        test_idx=test_idx,
        train_idx=train_idx,
        inner_train_idx=train_idx[split["inner_train"]],
        inner_val_idx=train_idx[split["inner_val"]],
        predictions=pred,
        qwk=qwk(test.targets, pred, N_CLASSES),
        confusion=confusion(test.targets, pred, N_CLASSES),
        train_report=model.report,
        pipeline=model.pipeline,
    )


def _run_fold_job(args):
    try:
        return run_fold(*args)
    except ShadowRatingError as exc:
        raise type(exc)(f"fold {args[2]}: {exc}") from exc


@dataclass
class EvalReport:
    model: str
    fold_qwk: list[float]
    confusion: np.ndarray
    fold_confusions: list[np.ndarray]
    fingerprint: str
    oof_predictions: np.ndarray
    folds: list[FoldResult] = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self.fold_qwk)

    @property
    def qwk_mean(self) -> float:
        return float(np.mean(self.fold_qwk))

    @property
    def qwk_std(self) -> float:
        """Sample standard deviation of the per-fold QWK."""
        return float(np.std(self.fold_qwk, ddof=1)) if self.k > 1 else 0.0

    def class_metrics(self):
        return class_metrics(self.confusion)

    def to_dict(self) -> dict:
        cm = self.class_metrics()
        return {
            "model": self.model,
            "k": self.k,
            "fingerprint": self.fingerprint,
            "qwk": {"mean": self.qwk_mean, "std_over_folds": self.qwk_std, "per_fold": list(self.fold_qwk)},
            "per_class": cm.to_dict(CLASS_NAMES),
            "confusion": self.confusion.tolist(),
            "fold_confusions": [c.tolist() for c in self.fold_confusions],
            "training": [
                None if f.train_report is None else {
                    "epochs_run": f.train_report.epochs_run,
                    "best_epoch": f.train_report.best_epoch,
                    "best_val_qwk": f.train_report.best_qwk,
                    "stopped_early": f.train_report.stopped_early,
                }
                for f in self.folds
            ],
        }


def config_fingerprint(kind: str, cfg: EvalConfig, data: Dataset) -> str:
    blob = json.dumps({"model": kind, "config": cfg.to_dict(), "data": data.content_hash()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cross_validate(data: Dataset, kind: str, cfg: EvalConfig, jobs: int = 1) -> EvalReport:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    plan = stratified_folds(data.targets, cfg.k, cfg.seed)
    jobs_args = [(data, plan, i, kind, cfg) for i in range(cfg.k)]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(_run_fold_job, jobs_args))
        else:
            results = [_run_fold_job(a) for a in jobs_args]
    except ShadowRatingError as exc:
        raise type(exc)(f"model {kind}: {exc}") from exc

    oof = np.full(data.n_rows, -1, dtype=np.int64)
    for r in results:
        if np.any(oof[r.test_idx] >= 0):
            raise DataError("fold plan assigns a row to more than one test fold")
        oof[r.test_idx] = r.predictions
    return EvalReport(
        model=kind,
        fold_qwk=[r.qwk for r in results],
        confusion=sum((r.confusion for r in results), np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)),
        fold_confusions=[r.confusion for r in results],
        fingerprint=config_fingerprint(kind, cfg, data),
        oof_predictions=oof,
        folds=results,
    )
