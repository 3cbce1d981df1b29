import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowrating import preprocess
from shadowrating.errors import FitError, SchemaError
from shadowrating.ingest import Dataset, FeatureSchema, SynthSpec, generate_synthetic
from shadowrating.preprocess import (
    OOV,
    PAD,
    FittedPipeline,
    Tokenizer,
    label_encode,
    median,
    onehot,
    quantile_map,
    tokenize,
)

SCHEMA = FeatureSchema.from_dict({"columns": [
    {"name": "x", "kind": "numeric"},
    {"name": "colour", "kind": "categorical"},
    {"name": "sector", "kind": "text"},
    {"name": "rating", "kind": "label"},
]})


def make(xs, colours, sectors):
    n = len(xs)
    return Dataset(SCHEMA, {
        "x": np.array(xs, dtype=float),
        "colour": np.array(colours, dtype=object),
        "sector": np.array(sectors, dtype=object),
    }, np.zeros(n, dtype=np.int64), np.array(["Aaa"] * n, dtype=object))


def test_fit_examples():
    ds = make([1.0, np.nan, 3.0], ["red", "blue", "red"], ["wholesale retail trade", "air transport", "Air transport"])
    p = preprocess.fit(ds)
    assert p.medians["x"] == 2.0
    assert p.onehot_vocabs["colour"] == ["blue", "red"]
    assert p.tokenizer.max_len == 3
    assert p.quantile_maps["x"].tolist() == [1.0, 3.0]


def test_median_even_count_uses_mean_of_centre():
    assert median(np.array([4.0, 1.0, 3.0, 2.0])) == 2.5


def test_all_missing_column_is_fit_error():
    ds = make([np.nan, np.nan], ["a", "b"], ["s", "t"])
    with pytest.raises(FitError, match="'x'"):
        preprocess.fit(ds)


def test_transform_examples():
    train = make([1.0, 2.0, 3.0, 4.0, 5.0], ["red", "blue", "red", "red", "blue"], ["a b", "c", "a", "b c", "c"])
    p = preprocess.fit(train)
    fm = preprocess.transform(p, make([3.0, 99.0, -5.0, np.nan], ["red", "green", "blue", "red"],
                                      ["a b", "zzz", "", "a, b c d"]))
    assert fm.dense[:, 0].tolist() == [0.5, 1.0, 0.0, 0.5]  # median, above max, below min, imputed
    assert fm.imputed[:, 0].tolist() == [False, False, False, True]
    # colour block: blue, red, unknown
    assert fm.dense[1, 1:].tolist() == [0.0, 0.0, 1.0]
    assert fm.dense[0, 1:].tolist() == [0.0, 1.0, 0.0]
    assert fm.dense_names == ["x", "colour=blue", "colour=red", "colour=⟨unknown⟩"]
    a, b, c = p.tokenizer.vocab["a"], p.tokenizer.vocab["b"], p.tokenizer.vocab["c"]
    assert fm.token_seqs.tolist() == [[a, b], [OOV, PAD], [PAD, PAD], [a, b]]


def test_onehot_examples():
    assert onehot("b", ["a", "b", "c"]).tolist() == [0, 1, 0, 0]
    assert onehot("a", ["a"]).tolist() == [1, 0]
    assert onehot("z", ["a", "b"]).tolist() == [0, 0, 1]


def test_label_encode():
    assert label_encode(["b", "a", "q"], ["a", "b"]).tolist() == [1, 0, 2]


def test_tokenizer_contiguous():
    tok = Tokenizer.build(["Air transport!", "wholesale-retail trade"])
    assert tokenize("Wholesale-retail, trade") == ["wholesale", "retail", "trade"]
    assert sorted(tok.vocab.values()) == list(range(2, tok.vocab_size))
    assert tok.max_len == 3


def test_text_onehot_mode():
    train = make([1.0, 2.0], ["r", "b"], ["Air transport", "steel"])
    p = preprocess.fit(train, text_mode="onehot")
    fm = preprocess.transform(p, make([1.0], ["r"], ["air  transport"]))
    assert fm.token_seqs.shape == (1, 0)
    assert "sector=air transport" in fm.dense_names
    assert fm.dense[0, fm.dense_names.index("sector=air transport")] == 1.0
    assert [g for g, _ in fm.groups] == ["x", "colour", "sector"]


def test_schema_mismatch(small_synth):
    p = preprocess.fit(make([1.0, 2.0], ["r", "b"], ["a", "b"]))
    with pytest.raises(SchemaError):
        preprocess.transform(p, small_synth)


def test_serialisation_round_trip(small_synth):
    p = preprocess.fit(small_synth)
    q = FittedPipeline.from_dict(p.to_dict())
    assert p.state_equal(q)
    a, b = preprocess.transform(p, small_synth), preprocess.transform(q, small_synth)
    assert np.array_equal(a.dense, b.dense) and np.array_equal(a.token_seqs, b.token_seqs)


def test_fit_independent_of_validation_rows(small_synth):
    rng = np.random.default_rng(0)
    idx = rng.permutation(small_synth.n_rows)
    train = idx[:400]
    p1 = preprocess.fit(small_synth.subset(train))
    _ = preprocess.transform(p1, small_synth.subset(idx[400:500]))
    p2 = preprocess.fit(small_synth.subset(train))
    _ = preprocess.transform(p2, small_synth.subset(idx[500:]))
    assert p1.to_json() == p2.to_json()
    assert not p1.state_equal(preprocess.fit(small_synth.subset(idx[:450])))


def test_shapes_independent_of_row_count(small_synth):
    p = preprocess.fit(small_synth)
    for n in (1, 7, 100):
        fm = preprocess.transform(p, small_synth.subset(range(n)))
        assert fm.dense.shape == (n, p.n_dense)
        assert fm.token_seqs.shape == (n, p.max_len)
        assert len(fm.dense_names) == p.n_dense


def test_onehot_blocks_sum_to_one(small_synth):
    p = preprocess.fit(small_synth, text_mode="onehot")
    fm = preprocess.transform(p, small_synth)
    for name, cols in fm.groups:
        if len(cols) > 1:
            assert np.all(fm.dense[:, cols].sum(axis=1) == 1.0), name
    assert not np.isnan(fm.dense).any()
    assert fm.dense.min() >= 0.0 and fm.dense.max() <= 1.0


def ks_uniform(u: np.ndarray) -> float:
    u = np.sort(u)
    n = len(u)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=300, unique=True))
def test_quantile_uniformity_bound(values):
    x = np.array(values)
    u = quantile_map(np.sort(x), x)
    assert ks_uniform(u) <= 2.0 / np.sqrt(len(x))
    assert u.min() == 0.0 and u.max() == 1.0


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=50))
def test_quantile_map_monotone_and_bounded(values):
    s = np.sort(np.array(values))
    probe = np.linspace(-200, 200, 101)
    u = quantile_map(s, probe)
    assert np.all(np.diff(u) >= 0)
    assert u.min() >= 0.0 and u.max() <= 1.0
    assert np.all(u[probe > s.max()] == 1.0) and np.all(u[probe < s.min()] == 0.0)


def test_quantile_map_ties_centred():
    s = np.array([1.0, 2.0, 2.0, 2.0, 3.0])
    assert quantile_map(s, np.array([2.0]))[0] == 0.5
