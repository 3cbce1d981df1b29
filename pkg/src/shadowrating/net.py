"""Small reverse-mode network: token embeddings + dense tabular inputs.

Layout::

    tokens -> Embedding -> SpatialDropout1D -> Flatten --+
                                                         +-> Concat -> Dense/ReLU -> Dropout
    dense features ---------------------------------------+      -> Dense/ReLU -> Dropout -> Dense (linear)

Layers are stateless with respect to a batch: ``forward`` returns the output
plus a cache, ``backward`` consumes the cache. Dropout uses the inverted
convention (kept units scaled by ``1 / (1 - p)`` at train time, identity at
inference).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericError, SchemaError, StateError

FORMAT = "shadowrating.network"
FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "identity", "sigmoid")


class Layer:
    name = ""

    def params(self) -> dict[str, np.ndarray]:
        return {}


class Embedding(Layer):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator | None = None):
        self.vocab_size, self.dim = vocab_size, dim
        self.W = rng.uniform(-0.05, 0.05, (vocab_size, dim)) if rng is not None else np.zeros((vocab_size, dim))

    def params(self):
        return {"W": self.W}

    def forward(self, idx: np.ndarray):
        if idx.size and (idx.max() >= self.vocab_size or idx.min() < 0):
            raise IndexError(f"token index out of range for vocabulary of size {self.vocab_size}")
        return self.W[idx], idx

    def backward(self, idx, dout):
        dW = np.zeros_like(self.W)
        np.add.at(dW, idx.ravel(), dout.reshape(-1, self.dim))
        return None, {"W": dW}


class SpatialDropout1D(Layer):
    """Drops whole embedding channels for every position of a sequence."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train: bool, rng):
        if not train or self.rate == 0.0:
            return x, None
        b, _, d = x.shape
        mask = (rng.random((b, 1, d)) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, mask, dout):
        return (dout if mask is None else dout * mask), {}


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train: bool, rng):
        if not train or self.rate == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, mask, dout):
        return (dout if mask is None else dout * mask), {}


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "relu", rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        if rng is not None:
            limit = math.sqrt(6.0 / (n_in + n_out))
            self.W = rng.uniform(-limit, limit, (n_in, n_out))
        else:
            self.W = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x):
        z = x @ self.W + self.b
        if self.activation == "relu":
            a = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            a = 1.0 / (1.0 + np.exp(-z))
        else:
            a = z
        return a, (x, z, a)

    def backward(self, cache, dout):
        x, z, a = cache
        if self.activation == "relu":
            dz = dout * (z > 0)
        elif self.activation == "sigmoid":
            dz = dout * a * (1.0 - a)
        else:
            dz = dout
        return dz @ self.W.T, {"W": x.T @ dz, "b": dz.sum(axis=0)}


@dataclass(frozen=True)
class NetConfig:
    n_dense: int
    vocab_size: int = 0
    max_len: int = 0
    embedding_dim: int = 10
    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.5
    spatial_dropout: float | None = None  # defaults to ``dropout``

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def has_embedding(self) -> bool:
        return self.vocab_size > 0 and self.max_len > 0


@dataclass
class ForwardTrace:
    training: bool
    signature: tuple
    batch: int
    caches: dict = field(default_factory=dict)


class Network:
    def __init__(self, cfg: NetConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.embedding = None
        self.spatial = None
        n_in = cfg.n_dense
        if cfg.has_embedding:
            self.embedding = Embedding(cfg.vocab_size, cfg.embedding_dim, rng)
            sp = cfg.dropout if cfg.spatial_dropout is None else cfg.spatial_dropout
            self.spatial = SpatialDropout1D(sp)
            n_in += cfg.max_len * cfg.embedding_dim
        self.head: list[Layer] = []
        for h in cfg.hidden:
            self.head.append(Dense(n_in, h, "relu", rng))
            self.head.append(Dropout(cfg.dropout))
            n_in = h
        self.head.append(Dense(n_in, 1, "identity", rng))
        self.n_inputs = n_in

    # ---- parameters

    def _param_layers(self):
        layers = []
        if self.embedding is not None:
            layers.append(("embedding", self.embedding))
        k = 0
        for layer in self.head:
            if isinstance(layer, Dense):
                layers.append((f"dense{k}", layer))
                k += 1
        return layers

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed ``"<layer>.<W|b>"`` (stable order)."""
        return {f"{ln}.{pn}": arr for ln, layer in self._param_layers() for pn, arr in layer.params().items()}

    def n_params(self) -> int:
        return sum(a.size for a in self.params().values())

    def signature(self) -> tuple:
        return tuple((k, v.shape) for k, v in self.params().items())

    def copy(self) -> "Network":
        clone = Network.__new__(Network)
        clone.__dict__.update(self.__dict__)
        clone.embedding = None
        if self.embedding is not None:
            clone.embedding = Embedding(self.embedding.vocab_size, self.embedding.dim)
            clone.embedding.W = self.embedding.W.copy()
        clone.head = []
        for layer in self.head:
            if isinstance(layer, Dense):
                d = Dense(layer.n_in, layer.n_out, layer.activation)
                d.W, d.b = layer.W.copy(), layer.b.copy()
                clone.head.append(d)
            else:
                clone.head.append(layer)
        return clone

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        live = self.params()
        for k, v in values.items():
            live[k][...] = v

    # ---- passes

    def forward(self, dense: np.ndarray, tokens: np.ndarray | None = None, mode: str = "infer",
                rng: np.random.Generator | None = None):
        """Return ``(predictions, trace)``; predictions have shape ``(batch,)``."""
        if mode not in ("train", "infer"):
            raise ValueError("mode must be 'train' or 'infer'")
        train = mode == "train"
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 2 or dense.shape[1] != self.cfg.n_dense:
            raise SchemaError(f"dense input must have {self.cfg.n_dense} columns, got shape {dense.shape}")
        if train and rng is None and self.cfg.dropout > 0:
            raise ValueError("train-mode forward with dropout needs an rng")
        trace = ForwardTrace(train, self.signature(), dense.shape[0])
        x = dense
        if self.embedding is not None:
            tokens = np.asarray(tokens, dtype=np.int64)
            if tokens.shape != (dense.shape[0], self.cfg.max_len):
                raise SchemaError(f"token input must have shape (batch, {self.cfg.max_len}), got {tokens.shape}")
            e, trace.caches["embedding"] = self.embedding.forward(tokens)
            e, trace.caches["spatial"] = self.spatial.forward(e, train, rng)
            flat = e.reshape(e.shape[0], -1)
            x = np.concatenate([flat, dense], axis=1)
        for i, layer in enumerate(self.head):
            if isinstance(layer, Dense):
                x, trace.caches[i] = layer.forward(x)
            else:
                x, trace.caches[i] = layer.forward(x, train, rng)
        return x[:, 0], trace

    def backward(self, trace: ForwardTrace, d_pred: np.ndarray) -> dict[str, np.ndarray]:
        if not trace.training:
            raise StateError("backward requires a train-mode forward trace")
        if trace.signature != self.signature():
            raise StateError("trace was produced by a network of different shape")
        d = np.asarray(d_pred, dtype=float).reshape(-1, 1)
        if d.shape[0] != trace.batch:
            raise StateError("upstream gradient length differs from the traced batch")
        grads: dict[str, np.ndarray] = {}
        names = {id(layer): name for name, layer in self._param_layers()}
        for i in range(len(self.head) - 1, -1, -1):
            layer = self.head[i]
            d, g = layer.backward(trace.caches[i], d)
            for pn, arr in g.items():
                grads[f"{names[id(layer)]}.{pn}"] = arr
        if self.embedding is not None:
            n_emb = self.cfg.max_len * self.cfg.embedding_dim
            d_emb = d[:, :n_emb].reshape(-1, self.cfg.max_len, self.cfg.embedding_dim)
            d_emb, _ = self.spatial.backward(trace.caches["spatial"], d_emb)
            _, g = self.embedding.backward(trace.caches["embedding"], d_emb)
            grads["embedding.W"] = g["W"]
        return {k: grads[k] for k in self.params()}

    def predict(self, dense: np.ndarray, tokens: np.ndarray | None = None, batch_size: int = 4096) -> np.ndarray:
        n = dense.shape[0]
        out = np.empty(n)
        for s in range(0, n, batch_size):
            tk = None if tokens is None else tokens[s:s + batch_size]
            out[s:s + batch_size], _ = self.forward(dense[s:s + batch_size], tk, "infer")
        return out

    # ---- serialization

    def to_dict(self) -> dict:
        cfg = asdict(self.cfg)
        cfg["hidden"] = list(self.cfg.hidden)
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "config": cfg,
            "shapes": {k: list(v.shape) for k, v in self.params().items()},
            "weights": {k: v.tolist() for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise SchemaError(f"not a {FORMAT} v{FORMAT_VERSION} artifact")
        net = cls(NetConfig(**d["config"]))
        live = net.params()
        if set(live) != set(d["shapes"]) or set(live) != set(d["weights"]):
            raise SchemaError("artifact parameter names do not match the configured network")
        for k, arr in live.items():
            w = np.asarray(d["weights"][k], dtype=float)
            if list(arr.shape) != list(d["shapes"][k]) or w.shape != arr.shape:
                raise SchemaError(f"shape mismatch for {k}: expected {arr.shape}, artifact has {w.shape}")
            arr[...] = w
        return net

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def mse_loss(pred: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    r = pred - y
    return float(np.mean(r * r)), 2.0 * r / r.size


def check_finite(grads: dict[str, np.ndarray]) -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = g[~np.isfinite(g)]
            raise NumericError(f"non-finite gradient in {k}: {bad.size} entries, e.g. {bad.flat[0]!r}")


def sgd_step(net: Network, grads: dict[str, np.ndarray], lr: float) -> Network:
    """In-place ``w <- w - lr * g`` for every parameter; returns ``net``."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    check_finite(grads)
    for k, w in net.params().items():
        w -= lr * grads[k]
    return net


class SGD:
    """Mini-batch SGD with optional classical momentum (off by default)."""

    def __init__(self, lr: float = 0.01, momentum: float = 0.0):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.momentum = lr, momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, net: Network, grads: dict[str, np.ndarray]) -> None:
        if self.momentum == 0.0:
            sgd_step(net, grads, self.lr)
            return
        check_finite(grads)
        for k, w in net.params().items():
            v = self._velocity.get(k)
            v = -self.lr * grads[k] if v is None else self.momentum * v - self.lr * grads[k]
            self._velocity[k] = v
            w += v
