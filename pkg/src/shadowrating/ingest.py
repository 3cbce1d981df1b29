"""Tabular data: schema, CSV loading/writing, and the synthetic generator.

A :class:`Dataset` is stored column-wise. Numeric columns are float arrays
with ``NaN`` as the missing marker, categorical and text columns are object
arrays of strings, and the label is kept both as the integer target and as
the exact string read from the file.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng as rng_streams
from .domain import CLASS_NAMES, N_CLASSES, parse_rating
from .errors import ConfigError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
TEXT = "text"
LABEL = "label"
KINDS = (NUMERIC, CATEGORICAL, TEXT, LABEL)

MISSING_CATEGORY = "⟨missing⟩"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(*c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in schema: {names}")
        for c in cols:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r} has unknown kind {c.kind!r}")
        kinds = [c.kind for c in cols]
        if kinds.count(LABEL) != 1:
            raise SchemaError("schema needs exactly one label column")
        if kinds.count(NUMERIC) < 1:
            raise SchemaError("schema needs at least one numeric column")
        if kinds.count(TEXT) > 1:
            raise SchemaError("schema allows at most one text column")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def _of(self, kind: str) -> list[str]:
        return [c.name for c in self.columns if c.kind == kind]

    @property
    def numeric(self) -> list[str]:
        return self._of(NUMERIC)

    @property
    def categorical(self) -> list[str]:
        return self._of(CATEGORICAL)

    @property
    def text(self) -> str | None:
        t = self._of(TEXT)
        return t[0] if t else None

    @property
    def label(self) -> str:
        return self._of(LABEL)[0]

    def to_dict(self) -> dict:
        return {"columns": [{"name": c.name, "kind": c.kind} for c in self.columns]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        try:
            return cls(tuple(Column(c["name"], c["kind"]) for c in d["columns"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    columns: Mapping[str, np.ndarray]
    targets: np.ndarray
    raw_labels: np.ndarray

    def __post_init__(self):
        n = len(self.targets)
        if n == 0:
            raise SchemaError("dataset has no rows")
        for name in self.schema.names:
            if name == self.schema.label:
                continue
            if name not in self.columns:
                raise SchemaError(f"dataset lacks column {name!r}")
            if len(self.columns[name]) != n:
                raise SchemaError(f"column {name!r} has {len(self.columns[name])} rows, expected {n}")
        for a in (*self.columns.values(), self.targets, self.raw_labels):
            _frozen(a)

    @property
    def n_rows(self) -> int:
        return len(self.targets)

    def __len__(self) -> int:
        return self.n_rows

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            {k: v[idx].copy() for k, v in self.columns.items()},
            self.targets[idx].copy(),
            self.raw_labels[idx].copy(),
        )

    def content_hash(self) -> str:
        import hashlib

        buf = io.StringIO()
        _write(self, buf)
        return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- CSV


def _fmt_number(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def _write(ds: Dataset, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ds.schema.names)
    cols = []
    for c in ds.schema.columns:
        if c.kind == LABEL:
            cols.append(ds.raw_labels)
        elif c.kind == NUMERIC:
            cols.append([_fmt_number(v) for v in ds.columns[c.name]])
        elif c.kind == CATEGORICAL:
            cols.append(["" if v == MISSING_CATEGORY else v for v in ds.columns[c.name]])
        else:
            cols.append(ds.columns[c.name])
    for row in zip(*cols):
        w.writerow(row)


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` as UTF-8 CSV; numbers use the shortest round-trip repr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write(ds, fh)


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Read a header-row CSV file and validate it against ``schema``.

    Errors carry the 1-based file line and the column name.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        return read_csv(fh, schema, source=str(path))


def read_csv(fh, schema: FeatureSchema, source: str = "<stream>") -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{source}: empty file") from None
    if header != schema.names:
        raise SchemaError(f"{source}: header {header} does not match schema {schema.names}")

    values: dict[str, list] = {n: [] for n in schema.names}
    kinds = [c.kind for c in schema.columns]
    targets: list[int] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"{source}: line {line_no} has {len(row)} fields, expected {len(header)}")
        for name, kind, cell in zip(header, kinds, row):
            where = f"{source}: line {line_no}, column {name!r}"
            if kind == NUMERIC:
                if cell.strip() == "":
                    values[name].append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(f"{where}: unparseable number {cell!r}") from None
                if not math.isfinite(v):
                    raise SchemaError(f"{where}: non-finite number {cell!r}")
                values[name].append(v)
            elif kind == CATEGORICAL:
                values[name].append(cell if cell != "" else MISSING_CATEGORY)
            elif kind == TEXT:
                values[name].append(cell)
            else:
                try:
                    targets.append(int(parse_rating(cell)))
                except SchemaError:
                    raise SchemaError(f"{where}: unknown rating label {cell!r}") from None
                values[name].append(cell)
    if not targets:
        raise SchemaError(f"{source}: no data rows")

    cols = {}
    for c in schema.columns:
        if c.kind == LABEL:
            continue
        if c.kind == NUMERIC:
            cols[c.name] = np.array(values[c.name], dtype=float)
        else:
            cols[c.name] = np.array(values[c.name], dtype=object)
    return Dataset(
        schema,
        cols,
        np.array(targets, dtype=np.int64),
        np.array(values[schema.label], dtype=object),
    )


# --------------------------------------------------------------------- synthetic

# Three word slots; every combination is a sector phrase, and the sector effect
# is the sum of per-word effects so that words share signal across phrases.
SECTOR_SLOTS: tuple[tuple[str, ...], ...] = (
    ("wholesale", "retail", "specialised", "industrial", "consumer", "regional", "integrated", "public"),
    ("steel", "chemicals", "textiles", "software", "telecom", "transport", "energy", "construction",
     "food", "media"),
    ("manufacturing", "services", "distribution", "trading", "holding", "engineering"),
)

# Mass concentrated on A..B, near-empty tails (shape of the aggregated histogram).
SKEWED_CLASS_WEIGHTS = (0.01, 0.06, 0.20, 0.30, 0.20, 0.15, 0.06, 0.015, 0.005)
UNIFORM_CLASS_WEIGHTS = tuple([1.0 / N_CLASSES] * N_CLASSES)


def compositional_sectors(slots: Sequence[Sequence[str]] = SECTOR_SLOTS) -> list[str]:
    phrases = [""]
    for words in slots:
        phrases = [f"{p} {w}".strip() for p in phrases for w in words]
    return phrases


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 2000
    n_numeric: int = 8
    n_categorical: int = 2
    sector_vocab: tuple[str, ...] = field(default_factory=lambda: tuple(compositional_sectors()))
    class_weights: tuple[float, ...] = SKEWED_CLASS_WEIGHTS
    missing_rate: float = 0.02
    noise_std: float = 0.3
    seed: int = 0
    # Multiplier on the sector effect; raises the text-borne share of the latent score.
    sector_scale: float = 1.0
    categorical_levels: int = 4

    def __post_init__(self):
        object.__setattr__(self, "sector_vocab", tuple(self.sector_vocab))
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        self.validate()

    def validate(self) -> None:
        if self.n_rows < 1:
            raise ConfigError("n_rows must be positive")
        if self.n_numeric < 4:
            raise ConfigError("n_numeric must be >= 4 (linear, interaction pair and threshold terms)")
        if self.n_categorical < 0 or self.categorical_levels < 1:
            raise ConfigError("n_categorical must be >= 0 and categorical_levels >= 1")
        if not self.sector_vocab or any(not p.strip() for p in self.sector_vocab):
            raise ConfigError("sector_vocab must be a non-empty list of non-blank phrases")
        w = self.class_weights
        if len(w) != N_CLASSES or any(x < 0 or not math.isfinite(x) for x in w):
            raise ConfigError(f"class_weights must be {N_CLASSES} nonnegative reals")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError(f"class_weights must sum to 1, got {sum(w)!r}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")
        if self.noise_std < 0 or self.sector_scale < 0:
            raise ConfigError("noise_std and sector_scale must be nonnegative")
        counts = class_counts(self.n_rows, w)
        starved = [CLASS_NAMES[k] for k in range(N_CLASSES) if w[k] > 0 and counts[k] == 0]
        if starved:
            raise ConfigError(
                f"n_rows={self.n_rows} too small: classes {starved} have positive weight but get no rows"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sector_vocab"] = list(self.sector_vocab)
        d["class_weights"] = list(self.class_weights)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic spec fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from None


def class_counts(n_rows: int, weights: Iterable[float]) -> np.ndarray:
    """Rows per class from cumulative rounding; each count is within 1 of n*w."""
    edges = np.rint(np.cumsum([0.0, *weights]) * n_rows).astype(np.int64)
    edges[-1] = n_rows
    return np.diff(edges)


def synth_schema(spec: SynthSpec) -> FeatureSchema:
    cols = [Column(f"num_{j:02d}", NUMERIC) for j in range(spec.n_numeric)]
    cols += [Column(f"cat_{j:02d}", CATEGORICAL) for j in range(spec.n_categorical)]
    cols += [Column("sector", TEXT), Column("rating", LABEL)]
    return FeatureSchema(tuple(cols))


def synth_latent(spec: SynthSpec) -> dict[str, np.ndarray]:
    """Draw the raw features and the additive components of the latent score.

    Keys: ``u`` (standardised numeric drivers, n x n_numeric), ``cats``
    (level indices), ``sector`` (phrase indices), and the score components
    ``linear``, ``interaction``, ``threshold``, ``categorical``,
    ``sector_effect``, ``noise``; ``z`` is their sum.
    """
    g = rng_streams.stream(spec.seed, rng_streams.SYNTH)
    n, p = spec.n_rows, spec.n_numeric

    u = g.standard_normal((n, p))
    coef = np.zeros(p)
    coef[0] = 1.0
    extra = g.uniform(-0.5, 0.5, size=p)
    for j in range(4, p):
        if j % 3 != 0:  # every third trailing column is pure noise
            coef[j] = extra[j]
    linear = u @ coef
    interaction = 1.5 * u[:, 1] * u[:, 2]
    threshold = 2.0 * (u[:, 3] > 0.3)

    cat_effects = g.normal(0.0, 0.5, size=(spec.n_categorical, spec.categorical_levels))
    cats = g.integers(0, spec.categorical_levels, size=(n, spec.n_categorical))
    categorical = np.zeros(n)
    for j in range(spec.n_categorical):
        categorical += cat_effects[j, cats[:, j]]

    words = sorted({w for phrase in spec.sector_vocab for w in _words(phrase)})
    word_effect = dict(zip(words, g.normal(0.0, 0.6, size=len(words))))
    phrase_effect = np.array([sum(word_effect[w] for w in _words(ph)) for ph in spec.sector_vocab])
    sector = g.integers(0, len(spec.sector_vocab), size=n)
    sector_effect = spec.sector_scale * phrase_effect[sector]

    noise = spec.noise_std * g.standard_normal(n)
    z = linear + interaction + threshold + categorical + sector_effect + noise
    return {
        "u": u,
        "cats": cats,
        "sector": sector,
        "linear": linear,
        "interaction": interaction,
        "threshold": threshold,
        "categorical": categorical,
        "sector_effect": sector_effect,
        "noise": noise,
        "z": z,
    }


def _words(phrase: str) -> list[str]:
    return phrase.lower().split()


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Build a labelled dataset with planted nonlinear and sector-text structure.

    Labels slice the empirical quantiles of the latent score so that class
    frequencies follow ``class_weights`` to within one row.
    """
    lat = synth_latent(spec)
    g = rng_streams.stream(spec.seed, rng_streams.SYNTH, 1)
    n = spec.n_rows
    u = lat["u"]

    order = np.argsort(lat["z"], kind="stable")
    targets = np.empty(n, dtype=np.int64)
    edges = np.concatenate([[0], np.cumsum(class_counts(n, spec.class_weights))])
    for k in range(N_CLASSES):
        targets[order[edges[k]:edges[k + 1]]] = k

    cols: dict[str, np.ndarray] = {}
    missing = g.random((n, spec.n_numeric)) < spec.missing_rate
    for j in range(spec.n_numeric):
        # even columns look like balance-sheet amounts, odd ones like ratios
        x = 1000.0 * np.exp(u[:, j]) if j % 2 == 0 else u[:, j].copy()
        x[missing[:, j]] = np.nan
        cols[f"num_{j:02d}"] = x
    for j in range(spec.n_categorical):
        cols[f"cat_{j:02d}"] = np.array([f"c{v}" for v in lat["cats"][:, j]], dtype=object)
    cols["sector"] = np.array([spec.sector_vocab[i] for i in lat["sector"]], dtype=object)
    raw = np.array([CLASS_NAMES[t] for t in targets], dtype=object)
    return Dataset(synth_schema(spec), cols, targets, raw)
