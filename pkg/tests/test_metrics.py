from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import best_permutation_total
from s2dl.metrics import ConfusionMatrix, align_labels, best_assignment, evaluate, metrics


def _labels_from_counts(counts):
    """Prediction / truth vectors realising a count matrix (labels from 1)."""
    pred, truth = [], []
    for r, c in np.ndindex(counts.shape):
        pred += [r + 1] * int(counts[r, c])
        truth += [c + 1] * int(counts[r, c])
    return np.array(pred), np.array(truth)


def test_diagonal_matrix_is_perfect():
    rep = metrics(np.diag([3, 4, 5]))
    assert rep.oa == rep.aa == rep.kappa == 1.0


def test_kappa_fixture():
    rep = metrics(np.array([[25, 5], [10, 60]]))
    assert rep.oa == 0.85
    p_e = Fraction(30 * 35 + 70 * 65, 100**2)
    assert p_e == Fraction(56, 100)
    exact = (Fraction(85, 100) - p_e) / (1 - p_e)
    assert rep.kappa == pytest.approx(float(exact), abs=1e-15)
    assert round(rep.kappa, 4) == 0.6591
    assert rep.producers.tolist() == [25 / 35, 60 / 65]
    assert rep.aa == pytest.approx((25 / 35 + 60 / 65) / 2, abs=1e-15)


def test_uniform_counts_have_zero_kappa():
    rep = metrics(np.array([[25, 25], [25, 25]]))
    assert rep.oa == 0.5
    assert rep.kappa == 0.0


def test_degenerate_chance_agreement():
    # a single cluster against a single class: p_e = 1, OA = 1
    rep = metrics(np.array([[10]]))
    assert rep.oa == 1.0 and rep.kappa == 1.0


def test_identity_alignment():
    gt = np.array([1, 1, 2, 2, 3])
    alignment, conf = align_labels(gt, gt)
    assert alignment == {1: 1, 2: 2, 3: 3}
    assert evaluate(gt, gt).oa == 1.0


def test_swapped_labels_aligned_back():
    gt = np.array([0, 1, 1, 2, 2, 2])
    pred = np.array([9, 2, 2, 1, 1, 1])  # pixel with gt 0 is ignored
    alignment, conf = align_labels(pred, gt)
    assert alignment == {1: 2, 2: 1}
    rep = evaluate(pred, gt)
    assert rep.oa == 1.0 and rep.kappa == 1.0
    assert conf.total == 5


def test_all_zero_truth_rejected():
    with pytest.raises(ValueError):
        align_labels(np.array([1, 2]), np.array([0, 0]))


def test_alignment_matches_exhaustive_search():
    rng = np.random.default_rng(5)
    for _ in range(100):
        kp, kg = rng.integers(1, 7, size=2)
        counts = rng.integers(0, 30, size=(kp, kg))
        counts[0, 0] += 1
        pred, truth = _labels_from_counts(counts)
        _, conf = align_labels(pred, truth)
        present = counts[counts.sum(1) > 0][:, counts.sum(0) > 0]
        assert int(np.trace(conf.counts)) == best_permutation_total(present)


def test_six_by_six_all_permutations(rng):
    counts = rng.integers(0, 50, size=(6, 6))
    matched = best_assignment(counts)
    assert sorted(matched.tolist()) == list(range(6))
    assert counts[np.arange(6), matched].sum() == best_permutation_total(counts)


@given(arrays(np.int64, (4, 3), elements=st.integers(0, 20)), st.permutations([1, 2, 3, 4]))
def test_metrics_invariant_under_relabeling(counts, perm):
    if counts.sum() == 0:
        return
    pred, truth = _labels_from_counts(counts)
    a = evaluate(pred, truth)
    relabel = np.array([0] + list(perm))
    b = evaluate(relabel[pred] * 7, truth)
    assert (a.oa, a.aa, a.kappa) == (b.oa, b.aa, b.kappa)


@given(arrays(np.int64, (3, 3), elements=st.integers(0, 15)))
def test_metric_ranges(counts):
    if counts.sum() == 0:
        return
    pred, truth = _labels_from_counts(counts)
    rep = evaluate(pred, truth)
    assert 0 <= rep.oa <= 1
    assert rep.aa == pytest.approx(np.nanmean(rep.producers))
    assert -1 <= rep.kappa <= 1
    assert rep.kappa <= rep.oa + 1e-12
    assert (rep.kappa == 1.0) == (rep.oa == 1.0)


@given(arrays(np.int64, (5, 2), elements=st.integers(0, 10)))
def test_alignment_beats_random_permutations(counts):
    if counts.sum() == 0:
        return
    pred, truth = _labels_from_counts(counts)
    _, conf = align_labels(pred, truth)
    rng = np.random.default_rng(0)
    sq = np.zeros((5, 5), dtype=int)
    sq[:, :2] = counts
    for _ in range(20):
        p = rng.permutation(5)
        assert np.trace(conf.counts) >= sq[p, np.arange(5)].sum()


def test_confusion_matrix_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[-1]]))
    with pytest.raises(ValueError):
        metrics(np.zeros((2, 2)))
