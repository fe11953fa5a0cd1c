import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ditreg import _fallback, kernels
from ditreg.knn import default_k, knn_indices


def brute_force_knn(pts, k):
    out = []
    for i, p in enumerate(pts):
        d = [(float(np.sum((q - p) ** 2)), j) for j, q in enumerate(pts) if j != i]
        out.append([j for _, j in sorted(d)[:k]])
    return np.array(out)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**16), data=st.data())
def test_matches_brute_force(n, seed, data):
    k = data.draw(st.integers(1, n - 1))
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    assert np.array_equal(knn_indices(pts, k), brute_force_knn(pts, k))


def test_ties_broken_by_lower_index():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, 0, 5]])
    assert knn_indices(pts, 3)[0].tolist() == [1, 2, 3]


def test_excludes_self_even_with_duplicates():
    pts = np.array([[0.0, 0, 0], [0, 0, 0], [1, 0, 0]])
    nbr = knn_indices(pts, 1)
    assert nbr[:, 0].tolist() == [1, 0, 0]


def test_invalid_k():
    pts = np.zeros((4, 3))
    for k in (0, 4):
        with pytest.raises(ValueError):
            knn_indices(pts, k)


def test_default_k():
    assert default_k(1024) == 20
    assert default_k(16) == 4
    assert default_k(3) == 1


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_compiled_kernels_match_fallback(rng):
    from ditreg import _kernels

    pts = np.round(rng.normal(size=(200, 3)), 1)  # rounding creates ties
    assert np.array_equal(_kernels.knn_indices(pts, 12), _fallback.knn_indices(pts, 12))
    q = rng.normal(size=(50, 3))
    i1, d1 = _kernels.nearest_neighbors(q, pts)
    i2, d2 = _fallback.nearest_neighbors(q, pts)
    assert np.array_equal(i1, i2)
    np.testing.assert_allclose(d1, d2, rtol=1e-14, atol=1e-15)
    y = rng.normal(size=(200, 3))
    match = rng.integers(0, 200, size=200)
    nbr = _fallback.knn_indices(pts, 6)
    np.testing.assert_allclose(_kernels.triangle_errors(pts, y, match, nbr),
                               _fallback.triangle_errors(pts, y, match, nbr), rtol=1e-13, atol=1e-15)
    vals = rng.random((30, 45))
    np.testing.assert_allclose(_kernels.mink_sum(vals, 10), _fallback.mink_sum(vals, 10), rtol=1e-14)
    vals[0, 4] = np.nan
    vals[1, :40] = np.nan
    vals[2, 7] = np.inf
    np.testing.assert_array_equal(_kernels.mink_sum(vals, 10), _fallback.mink_sum(vals, 10))
