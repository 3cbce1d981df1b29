import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_qwk
from shadowrating.errors import DataError
from shadowrating.metrics import accuracy, class_metrics, confusion, qwk

labels = st.lists(st.integers(0, 8), min_size=2, max_size=60)


def test_hand_case():
    assert qwk([0, 0, 1, 2], [0, 1, 1, 1], 3) == pytest.approx(0.428571, abs=1e-6)
    assert brute_qwk([0, 0, 1, 2], [0, 1, 1, 1], 3) == pytest.approx(3 / 7, abs=1e-12)


def test_matches_brute_force():
    g = np.random.default_rng(0)
    for _ in range(200):
        n = int(g.integers(2, 10))
        t, p = g.integers(0, n, 30), g.integers(0, n, 30)
        if len(set(t)) == 1 and len(set(p)) == 1:
            continue
        assert abs(qwk(t, p, n) - brute_qwk(t, p, n)) <= 1e-12


def test_perfect_agreement():
    y = np.arange(9).repeat(3)
    assert qwk(y, y) == 1.0
    assert qwk([4, 4], [4, 4]) == 1.0  # degenerate, diagonal


def test_random_predictions_near_zero():
    g = np.random.default_rng(1)
    t, p = g.integers(0, 9, 100_000), g.integers(0, 9, 100_000)
    assert abs(qwk(t, p)) <= 0.01


@given(labels, st.data())
def test_symmetry(t, data):
    p = data.draw(st.lists(st.integers(0, 8), min_size=len(t), max_size=len(t)))
    if len(set(t)) > 1 and len(set(p)) > 1:
        assert qwk(t, p) == pytest.approx(qwk(p, t), abs=1e-12)
        assert -1.0 <= qwk(t, p) <= 1.0


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_relabel_invariance(seed):
    g = np.random.default_rng(seed)
    t, p = g.integers(0, 5, 40), g.integers(0, 5, 40)
    used = np.union1d(t, p)
    rank = {c: i for i, c in enumerate(used)}
    t2, p2 = [rank[c] for c in t], [rank[c] for c in p]
    # compaction changes n, so compare on the compacted scale with spread classes
    spread = {c: 2 * i for i, c in enumerate(used)}
    t3, p3 = [spread[c] for c in t], [spread[c] for c in p]
    n = len(used)
    if n > 1:
        assert qwk(t2, p2, n) == pytest.approx(brute_qwk(t2, p2, n), abs=1e-12)
        # an affine order-preserving map leaves kappa unchanged
        assert qwk(t3, p3, 2 * n - 1) == pytest.approx(qwk(t2, p2, n), abs=1e-12)


def test_confusion_examples():
    assert np.array_equal(confusion([0, 1, 2], [0, 1, 2], 3), np.eye(3, dtype=int))
    cm = confusion([0, 1], [1, 0], 2)
    assert np.trace(cm) == 0 and cm.sum() == 2
    t = [0, 0, 2, 1, 2, 2]
    assert confusion(t, [1, 1, 1, 1, 1, 1], 3).sum(axis=1).tolist() == [2, 1, 3]


def test_confusion_rejects_out_of_range():
    with pytest.raises(DataError):
        confusion([0, 9], [0, 1], 9)


def test_class_metrics_example():
    cm = np.array([[2, 0], [1, 3]])
    m = class_metrics(cm)
    assert m.precision[0] == pytest.approx(2 / 3)
    assert m.recall[0] == 1.0
    assert m.f1[0] == pytest.approx(0.8)


def test_empty_class_reports_zero():
    cm = np.zeros((3, 3), dtype=int)
    cm[0, 0], cm[1, 1] = 4, 2
    m = class_metrics(cm)
    assert (m.precision[2], m.recall[2], m.f1[2], m.support[2]) == (0.0, 0.0, 0.0, 0)
    assert np.all(m.f1[:2] == 1.0)


@given(st.lists(st.integers(0, 8), min_size=1, max_size=80), st.data())
def test_f1_is_harmonic_mean_and_accuracy_identity(t, data):
    p = data.draw(st.lists(st.integers(0, 8), min_size=len(t), max_size=len(t)))
    cm = confusion(t, p)
    m = class_metrics(cm)
    for P, R, F in zip(m.precision, m.recall, m.f1):
        expected = 0.0 if P + R == 0 else 2 * P * R / (P + R)
        assert F == pytest.approx(expected, abs=1e-12)
    assert accuracy(cm) == np.mean(np.array(t) == np.array(p))
