import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import knn_bruteforce
from s2dl.density import (kde, knn_index, select_representatives, sigma0_at_percentile,
                          sigma0_grid)
from s2dl.ers import SuperpixelMap


def test_knn_collinear():
    ids, d = knn_index(np.array([[0.0], [1.0], [3.0]]), 1)
    assert ids[:, 0].tolist() == [1, 0, 1]
    assert d[:, 0].tolist() == [1.0, 1.0, 2.0]


def test_knn_duplicates_list_each_other_first():
    X = np.array([[0.0, 0.0], [5.0, 5.0], [0.0, 0.0]])
    ids, d = knn_index(X, 1)
    assert ids[0, 0] == 2 and ids[2, 0] == 0
    assert d[0, 0] == 0.0 and d[2, 0] == 0.0


def test_knn_matches_bruteforce(rng):
    X = rng.normal(size=(200, 5))
    ids, d = knn_index(X, 10)
    ref_ids, ref_d = knn_bruteforce(X, 10)
    np.testing.assert_array_equal(ids, ref_ids)
    np.testing.assert_allclose(d, ref_d, rtol=0, atol=1e-12)


def test_knn_exact_on_integer_ties():
    # many equal distances; order must follow the index
    X = np.array([[x, y] for x in range(6) for y in range(6)], dtype=float)
    ids, d = knn_index(X, 4)
    ref_ids, ref_d = knn_bruteforce(X, 4)
    np.testing.assert_array_equal(ids, ref_ids)
    np.testing.assert_array_equal(d, ref_d)


def test_knn_large_offset_still_exact(rng):
    X = 1e4 + rng.normal(size=(150, 30))
    ids, _ = knn_index(X, 5)
    ref_ids, _ = knn_bruteforce(X, 5)
    np.testing.assert_array_equal(ids, ref_ids)


def test_knn_rejects_bad_k():
    with pytest.raises(ValueError):
        knn_index(np.zeros((3, 2)), 3)


def test_kde_identical_pair():
    ids, d = knn_index(np.array([[1.0, 2.0], [1.0, 2.0]]), 1)
    field = kde(ids, d, 1.0)
    np.testing.assert_allclose(field.zeta, [0.5, 0.5])


def test_kde_direct_formula():
    ids, d = knn_index(np.array([[0.0], [1.0], [10.0]]), 1)
    field = kde(ids, d, 1.0)
    raw = np.array([math.exp(-1), math.exp(-1), math.exp(-81)])
    np.testing.assert_allclose(field.raw, raw, rtol=1e-13)
    np.testing.assert_allclose(field.zeta, raw / raw.sum(), rtol=1e-13)


def test_kde_positive_when_kernels_underflow():
    ids, d = knn_index(np.array([[0.0], [1e3], [2e3]]), 1)
    field = kde(ids, d, 1.0)
    assert (field.zeta > 0).all()
    assert abs(field.zeta.sum() - 1) <= 1e-10


@given(arrays(np.float64, (12, 3), elements=st.floats(-50, 50)), st.integers(1, 6),
       st.floats(0.05, 20))
def test_kde_normalised_and_sorted(X, k_n, sigma0):
    ids, d = knn_index(X, k_n)
    field = kde(ids, d, sigma0)
    assert (field.zeta > 0).all()
    assert abs(field.zeta.sum() - 1) <= 1e-10
    assert (np.diff(field.knn_dists, axis=1) >= 0).all()
    assert not (ids == np.arange(len(X))[:, None]).any()


@given(arrays(np.float64, (10, 2), elements=st.floats(-20, 20)), st.integers(0, 9),
       st.integers(1, 4), st.floats(0.1, 10))
def test_duplicating_a_pixel_never_lowers_its_raw_density(X, which, k_n, sigma0):
    ids, d = knn_index(X, k_n)
    before = kde(ids, d, sigma0).log_raw[which]
    Y = np.vstack([X, X[which]])
    ids2, d2 = knn_index(Y, k_n)
    after = kde(ids2, d2, sigma0).log_raw
    assert after[which] >= before - 1e-12
    assert after[-1] >= before - 1e-12


def test_sigma0_percentiles():
    dists = np.arange(1.0, 11.0).reshape(5, 2)
    assert sigma0_at_percentile(dists, 50) == pytest.approx(5.5)
    grid = sigma0_grid(dists)
    assert len(grid) == 9 and grid == sorted(grid)


def test_sigma0_skips_zero_distances():
    dists = np.array([[0.0, 0.0], [0.0, 2.0]])
    assert sigma0_at_percentile(dists, 30) > 0
    assert sigma0_at_percentile(np.zeros((2, 2)), 50) == 1.0


def _sp(assignment, shape=None):
    a = np.asarray(assignment)
    return SuperpixelMap(a, shape or (1, a.size))


def test_representatives_argmax():
    reps = select_representatives(np.array([0.1, 0.3, 0.2]), _sp([1, 1, 1]), 1)
    assert reps.ids.tolist() == [1]


def test_representatives_small_superpixel_kept_whole():
    reps = select_representatives(np.array([0.1, 0.3, 0.2, 0.4]), _sp([1, 1, 2, 2]), 5)
    assert reps.ids.tolist() == [0, 1, 2, 3]
    assert reps.owner.tolist() == [1, 1, 2, 2]


def test_representatives_match_sort_per_superpixel(rng):
    zeta = rng.random(90)
    zeta[[3, 7]] = zeta[11]  # ties inside superpixel 1
    assign = np.repeat([1, 2, 3], 30)
    rng.shuffle(assign)
    reps = select_representatives(zeta, _sp(assign), 5)
    expected = []
    for s in (1, 2, 3):
        members = [i for i in range(90) if assign[i] == s]
        expected += sorted(members, key=lambda i: (-zeta[i], i))[:5]
    assert reps.ids.tolist() == sorted(expected)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=30), st.integers(1, 5), st.data())
def test_representative_quota(assign, k, data):
    a = np.asarray(assign)
    # relabel to consecutive ids
    _, a = np.unique(a, return_inverse=True)
    a = a + 1
    zeta = np.asarray(data.draw(st.lists(st.sampled_from([0.1, 0.2, 0.3]), min_size=a.size, max_size=a.size)))
    reps = select_representatives(zeta, _sp(a), k)
    counts = np.bincount(reps.owner, minlength=a.max() + 1)[1:]
    sizes = np.bincount(a)[1:]
    np.testing.assert_array_equal(counts, np.minimum(k, sizes))
    assert reps.ids.size <= k * a.max()


def test_representatives_permutation_stability(rng):
    # distinct densities: permuting storage leaves the selected pixel set unchanged
    zeta = rng.permutation(40) / 40 + 0.01
    assign = np.repeat([1, 2, 3, 4], 10)
    perm = rng.permutation(40)
    a = select_representatives(zeta, _sp(assign), 3).ids
    b = select_representatives(zeta[perm], _sp(assign[perm]), 3).ids
    assert sorted(perm[b].tolist()) == a.tolist()
