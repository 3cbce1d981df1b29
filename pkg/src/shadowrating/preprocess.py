"""Fold-local feature pipeline.

:func:`fit` learns every statistic from one training fold; :func:`transform`
applies them to any other rows without touching the fitted state:

* numeric columns: median imputation, then the empirical CDF of the training
  values (uniform output on [0, 1], clamped outside the fitted range);
* categorical columns: one-hot with a trailing unknown slot;
* the sector text: word tokens for the embedding branch (``text_mode="embed"``)
  or one-hot of the whole normalised phrase (``text_mode="onehot"``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FitError, SchemaError
from .ingest import Dataset, FeatureSchema

PAD = 0
OOV = 1
UNKNOWN = "⟨unknown⟩"
TEXT_MODES = ("embed", "onehot")

_PUNCT = re.compile(r"[^\w\s]", flags=re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lower-case, replace punctuation with spaces, split on whitespace."""
    return _PUNCT.sub(" ", str(text).lower()).split()


@dataclass(frozen=True)
class Tokenizer:
    vocab: Mapping[str, int]
    max_len: int

    @classmethod
    def build(cls, texts: Sequence[str]) -> "Tokenizer":
        token_lists = [tokenize(t) for t in texts]
        words = sorted({w for toks in token_lists for w in toks})
        vocab = {w: i + 2 for i, w in enumerate(words)}
        max_len = max([len(t) for t in token_lists] + [1])
        return cls(vocab, max_len)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab) + 2

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.full((len(texts), self.max_len), PAD, dtype=np.int64)
        for i, t in enumerate(texts):
            ids = [self.vocab.get(w, OOV) for w in tokenize(t)][: self.max_len]
            out[i, : len(ids)] = ids
        return out


def onehot(value, vocab: Sequence[str]) -> np.ndarray:
    """One-hot vector of length ``len(vocab) + 1``; unseen values hit the last slot."""
    v = np.zeros(len(vocab) + 1)
    try:
        v[list(vocab).index(value)] = 1.0
    except ValueError:
        v[-1] = 1.0
    return v


def label_encode(values: Sequence[str], vocab: Sequence[str]) -> np.ndarray:
    """Integer codes by vocabulary position; unseen values get ``len(vocab)``."""
    index = {c: i for i, c in enumerate(vocab)}
    return np.array([index.get(v, len(vocab)) for v in values], dtype=np.int64)


def median(values: np.ndarray) -> float:
    v = np.sort(values[~np.isnan(values)])
    n = len(v)
    if n == 0:
        raise ValueError("median of empty sample")
    mid = n // 2
    return float(v[mid]) if n % 2 else float((v[mid - 1] + v[mid]) / 2.0)


def quantile_map(support: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Position of ``x`` on the empirical CDF of ``support`` (sorted), in [0, 1].

    Linear interpolation between support points; repeated support values are
    handled by averaging the forward and backward interpolations.
    """
    n = len(support)
    if n == 1:
        return np.where(x < support[0], 0.0, np.where(x > support[0], 1.0, 0.5))
    refs = np.linspace(0.0, 1.0, n)
    fwd = np.interp(x, support, refs)
    bwd = -np.interp(-x, -support[::-1], -refs[::-1])
    return 0.5 * (fwd + bwd)


def _phrase_key(text: str) -> str:
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class FeatureMatrix:
    dense: np.ndarray
    token_seqs: np.ndarray
    dense_names: list[str]
    groups: list[tuple[str, list[int]]]
    imputed: np.ndarray
    text_name: str | None = None

    @property
    def n_rows(self) -> int:
        return self.dense.shape[0]

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.dense[idx], self.token_seqs[idx], self.dense_names,
                             self.groups, self.imputed[idx], self.text_name)

    def combined(self) -> np.ndarray:
        """Dense columns followed by token ids (as floats) in one matrix."""
        return np.hstack([self.dense, self.token_seqs.astype(float)])

    def explain_groups(self) -> list[tuple[str, list[int]]]:
        """Feature groups over :meth:`combined` columns; the token block is one group."""
        groups = list(self.groups)
        L = self.token_seqs.shape[1]
        if L:
            d = self.dense.shape[1]
            groups.append((self.text_name or "text", list(range(d, d + L))))
        return groups


@dataclass(frozen=True)
class FittedPipeline:
    schema: FeatureSchema
    text_mode: str
    medians: Mapping[str, float]
    quantile_maps: Mapping[str, np.ndarray]
    onehot_vocabs: Mapping[str, list[str]]
    tokenizer: Tokenizer | None
    fitted_on: str = ""

    # ---- layout

    @property
    def onehot_columns(self) -> list[str]:
        cols = list(self.schema.categorical)
        if self.text_mode == "onehot" and self.schema.text:
            cols.append(self.schema.text)
        return cols

    @property
    def dense_names(self) -> list[str]:
        names = list(self.schema.numeric)
        for c in self.onehot_columns:
            names += [f"{c}={v}" for v in self.onehot_vocabs[c]] + [f"{c}={UNKNOWN}"]
        return names

    @property
    def n_dense(self) -> int:
        return len(self.dense_names)

    @property
    def max_len(self) -> int:
        return self.tokenizer.max_len if self.tokenizer else 0

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size if self.tokenizer else 0

    def groups(self) -> list[tuple[str, list[int]]]:
        out = []
        j = 0
        for c in self.schema.numeric:
            out.append((c, [j]))
            j += 1
        for c in self.onehot_columns:
            k = len(self.onehot_vocabs[c]) + 1
            out.append((c, list(range(j, j + k))))
            j += k
        return out

    # ---- serialization

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "text_mode": self.text_mode,
            "medians": dict(self.medians),
            "quantile_maps": {k: v.tolist() for k, v in self.quantile_maps.items()},
            "onehot_vocabs": {k: list(v) for k, v in self.onehot_vocabs.items()},
            "tokenizer": None if self.tokenizer is None else {
                "vocab": dict(self.tokenizer.vocab), "max_len": self.tokenizer.max_len},
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FittedPipeline":
        tok = d.get("tokenizer")
        return cls(
            schema=FeatureSchema.from_dict(d["schema"]),
            text_mode=d["text_mode"],
            medians={k: float(v) for k, v in d["medians"].items()},
            quantile_maps={k: np.asarray(v, dtype=float) for k, v in d["quantile_maps"].items()},
            onehot_vocabs={k: list(v) for k, v in d["onehot_vocabs"].items()},
            tokenizer=None if tok is None else Tokenizer(dict(tok["vocab"]), int(tok["max_len"])),
            fitted_on=d.get("fitted_on", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def state_equal(self, other: "FittedPipeline") -> bool:
        """Bit-for-bit comparison of fitted statistics (ignores ``fitted_on``)."""
        a, b = self.to_dict(), other.to_dict()
        a.pop("fitted_on"), b.pop("fitted_on")
        return json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def fit(train: Dataset, text_mode: str = "embed", fitted_on: str = "") -> FittedPipeline:
    if text_mode not in TEXT_MODES:
        raise ValueError(f"text_mode must be one of {TEXT_MODES}")
    schema = train.schema
    medians, qmaps = {}, {}
    for c in schema.numeric:
        col = np.asarray(train.columns[c], dtype=float)
        present = col[~np.isnan(col)]
        if present.size == 0:
            raise FitError(f"numeric column {c!r} has no non-missing values in the training fold")
        medians[c] = median(col)
        qmaps[c] = np.sort(present)

    vocabs = {c: sorted(set(train.columns[c])) for c in schema.categorical}
    tokenizer = None
    if schema.text:
        texts = list(train.columns[schema.text])
        if text_mode == "embed":
            tokenizer = Tokenizer.build(texts)
        else:
            vocabs[schema.text] = sorted({_phrase_key(t) for t in texts})
    return FittedPipeline(schema, text_mode, medians, qmaps, vocabs, tokenizer, fitted_on)


def transform(p: FittedPipeline, data: Dataset) -> FeatureMatrix:
    if data.schema != p.schema:
        raise SchemaError("dataset schema differs from the schema the pipeline was fitted on")
    n = data.n_rows
    blocks, imputed = [], []
    for c in p.schema.numeric:
        col = np.array(data.columns[c], dtype=float)
        miss = np.isnan(col)
        col[miss] = p.medians[c]
        blocks.append(quantile_map(p.quantile_maps[c], col)[:, None])
        imputed.append(miss[:, None])
    for c in p.onehot_columns:
        vocab = p.onehot_vocabs[c]
        values = data.columns[c]
        if c == p.schema.text:
            values = [_phrase_key(t) for t in values]
        codes = label_encode(values, vocab)
        block = np.zeros((n, len(vocab) + 1))
        block[np.arange(n), codes] = 1.0
        blocks.append(block)
        imputed.append(np.zeros((n, len(vocab) + 1), dtype=bool))
    dense = np.hstack(blocks)
    if p.tokenizer is not None:
        tokens = p.tokenizer.encode(list(data.columns[p.schema.text]))
    else:
        tokens = np.zeros((n, 0), dtype=np.int64)
    return FeatureMatrix(dense, tokens, p.dense_names, p.groups(), np.hstack(imputed),
                         p.schema.text if p.tokenizer is not None else None)
