import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caae_ids.errors import EmptyEvalError
from caae_ids.metrics import Confusion, compute_metrics, evaluate_predictions


def recount(pairs):
    # brute-force oracle straight from the definitions
    tp = sum(1 for p, a in pairs if p == 1 and a == 1)
    tn = sum(1 for p, a in pairs if p == 0 and a == 0)
    fp = sum(1 for p, a in pairs if p == 1 and a == 0)
    fn = sum(1 for p, a in pairs if p == 0 and a == 1)
    total = tp + tn + fp + fn
    rec = tp / (tp + fn) if tp + fn else None
    prec = tp / (tp + fp) if tp + fp else None
    f1 = 2 * prec * rec / (prec + rec) if rec is not None and prec is not None and prec + rec else None
    return (tp, tn, fp, fn), (fp + fn) / total, rec, prec, f1


pairs_st = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200)


def test_reference_example():
    rep = compute_metrics(Confusion(tp=90, tn=100, fp=0, fn=10))
    assert rep.er == pytest.approx(0.05)
    assert rep.recall == pytest.approx(0.9)
    assert rep.precision == pytest.approx(1.0)
    assert rep.f1 == pytest.approx(0.9474, abs=1e-4)


def test_perfect():
    rep = compute_metrics(Confusion(tp=5, tn=7))
    assert rep.er == 0 and rep.f1 == 1


def test_empty():
    with pytest.raises(EmptyEvalError):
        compute_metrics(Confusion())


def test_undefined_ratios():
    rep = compute_metrics(Confusion(tn=10))
    assert rep.recall is None and rep.precision is None and rep.f1 is None
    assert rep.er == 0
    rep = compute_metrics(Confusion(tn=3, fn=2))
    assert rep.recall == 0 and rep.precision is None and rep.f1 is None


def test_negative_counts():
    with pytest.raises(ValueError):
        Confusion(tp=-1)


def test_length_mismatch():
    with pytest.raises(ValueError):
        Confusion.from_predictions([0, 1], [0])


@given(pairs_st)
def test_matches_recount(pairs):
    p, a = zip(*pairs)
    rep = evaluate_predictions(np.array(p), np.array(a))
    counts, er, rec, prec, f1 = recount(pairs)
    c = rep.confusion
    assert (c.tp, c.tn, c.fp, c.fn) == counts
    assert rep.er == er and rep.recall == rec and rep.precision == prec and rep.f1 == f1


@given(pairs_st, st.randoms())
def test_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate_predictions(*map(np.array, zip(*pairs)))
    b = evaluate_predictions(*map(np.array, zip(*shuffled)))
    assert a.confusion == b.confusion and a.f1 == b.f1


@given(pairs_st)
def test_f1_is_harmonic_mean(pairs):
    rep = evaluate_predictions(*map(np.array, zip(*pairs)))
    if rep.f1 is not None:
        assert rep.f1 == pytest.approx(2 / (1 / rep.precision + 1 / rep.recall))
    assert rep.confusion.total == len(pairs)


def test_add():
    assert Confusion(1, 2, 3, 4) + Confusion(1, 1, 1, 1) == Confusion(2, 3, 4, 5)


def test_line_format():
    rep = compute_metrics(Confusion(tp=90, tn=100, fp=0, fn=10),
                          {"name": "known", "train_ratio": 0.1, "label_ratio": 0.4})
    assert rep.as_line() == "known,0.1000,0.4000,0.0500,0.9000,1.0000,0.9474"
    assert compute_metrics(Confusion(tn=4)).as_line() == ",,,0.0000,,,"


def test_table_format():
    table = compute_metrics(Confusion(tn=4), {"name": "x", "held_out": "dos"}).as_table()
    assert "F1" in table and "undefined" in table and "held_out" in table and "0.00%" in table
