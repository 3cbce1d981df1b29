"""Mini-batch SGD training with early stopping on validation QWK."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import rng as rng_streams
from .domain import N_CLASSES, discretize_array
from .errors import ConfigError, NumericError
from .metrics import qwk
from .net import SGD, NetConfig, Network, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 150
    lr: float = 0.01
    batch_size: int = 32
    dropout_p: float = 0.5
    patience: int = 15
    seed: int = 0
    momentum: float = 0.0
    hidden: tuple[int, ...] = (64, 64)
    embedding_dim: int = 10

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs_max < 1:
            raise ConfigError("epochs_max must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if not self.hidden or min(self.hidden) < 1 or self.embedding_dim < 1:
            raise ConfigError("hidden sizes and embedding_dim must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)

    def net_config(self, n_dense: int, vocab_size: int = 0, max_len: int = 0) -> NetConfig:
        return NetConfig(n_dense=n_dense, vocab_size=vocab_size, max_len=max_len,
                         embedding_dim=self.embedding_dim, hidden=self.hidden, dropout=self.dropout_p)


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_qwk: float
    initial_train_mse: float
    history: list[dict] = field(default_factory=list)
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class EarlyStopping:
    """Patience tracker; epochs are 1-based, improvement must be strict."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, score: float) -> bool:
        """Record one epoch's score; return True when training should stop."""
        self.epoch += 1
        if score > self.best:
            self.best, self.best_epoch = score, self.epoch
            return False
        return self.epoch - self.best_epoch >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


def new_network(cfg: TrainConfig, n_dense: int, vocab_size: int = 0, max_len: int = 0) -> Network:
    return Network(cfg.net_config(n_dense, vocab_size, max_len), rng_streams.stream(cfg.seed, rng_streams.INIT))


def train_model(net: Network, train, val, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    """Fit ``net`` on ``train``; keep the weights with the best validation QWK.

    ``train`` and ``val`` are ``(FeatureMatrix, targets)`` pairs produced by the
    same fitted pipeline. The input network is left untouched.
    """
    fm_tr, y_tr = train
    fm_va, y_va = val
    y_tr = np.asarray(y_tr, dtype=float)
    y_va = np.asarray(y_va, dtype=np.int64)
    if fm_va.n_rows == 0 or len(y_va) == 0:
        raise ConfigError("validation set is empty")
    if fm_tr.n_rows == 0:
        raise ConfigError("training set is empty")

    net = net.copy()
    tokens_tr = fm_tr.token_seqs if net.embedding is not None else None
    tokens_va = fm_va.token_seqs if net.embedding is not None else None
    shuffle_rng = rng_streams.stream(cfg.seed, rng_streams.SHUFFLE)
    dropout_rng = rng_streams.stream(cfg.seed, rng_streams.DROPOUT)
    opt = SGD(cfg.lr, cfg.momentum)

    initial_mse = float(np.mean((net.predict(fm_tr.dense, tokens_tr) - y_tr) ** 2))
    stopper = EarlyStopping(cfg.patience)
    best = {k: v.copy() for k, v in net.params().items()}
    history: list[dict] = []
    n = fm_tr.n_rows
    stopped = False
    for epoch in range(1, cfg.epochs_max + 1):
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            pred, trace = net.forward(fm_tr.dense[idx], None if tokens_tr is None else tokens_tr[idx],
                                      "train", dropout_rng)
            loss, d_pred = mse_loss(pred, y_tr[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch starting {s}")
            try:
                opt.step(net, net.backward(trace, d_pred))
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from None
            total += loss * len(idx)
            seen += len(idx)
        val_pred = net.predict(fm_va.dense, tokens_va)
        if not np.all(np.isfinite(val_pred)):
            raise NumericError(f"non-finite validation predictions at epoch {epoch}")
        score = qwk(y_va, discretize_array(val_pred), N_CLASSES)
        history.append({"epoch": epoch, "train_mse": total / seen, "val_qwk": score})
        stop = stopper.update(score)
        if stopper.improved:
            best = {k: v.copy() for k, v in net.params().items()}
        if stop:
            stopped = epoch < cfg.epochs_max
            break
    net.set_params(best)
    log.debug("trained %d epochs, best epoch %d (qwk %.4f)", len(history), stopper.best_epoch, stopper.best)
    report = TrainReport(
        epochs_run=len(history),
        best_epoch=stopper.best_epoch,
        best_qwk=float(stopper.best),
        initial_train_mse=initial_mse,
        history=history,
        stopped_early=stopped,
    )
    return net, report
