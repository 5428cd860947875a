import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import bruteforce
from exf import numcore
from exf.errors import BatchTooSmallError, DegenerateError, InvalidInputError, InvalidParameterError

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def matrices(min_rows=1, max_rows=8, max_cols=5):
    return st.tuples(st.integers(min_rows, max_rows), st.integers(1, max_cols)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


class TestPairwiseDistances:
    def test_line(self):
        D = numcore.pairwise_distances([[0.0], [3.0]])
        np.testing.assert_array_equal(D.dist, [[0, 3], [3, 0]])

    def test_identical_rows(self):
        D = numcore.pairwise_distances(np.ones((4, 3)))
        assert np.all(D.dist == 0)

    def test_345(self):
        assert numcore.pairwise_distances([[0, 0], [3, 4]]).dist[0, 1] == 5.0

    def test_matches_brute_force(self, rng):
        X = rng.normal(size=(9, 4))
        D = numcore.pairwise_distances(X).dist
        for i in range(9):
            for j in range(9):
                assert D[i, j] == pytest.approx(bruteforce.dist(X[i], X[j]), abs=1e-12)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            numcore.pairwise_distances(np.zeros((0, 3)))

    @given(matrices(min_rows=3))
    @settings(max_examples=60, deadline=None)
    def test_metric_properties(self, X):
        D = numcore.pairwise_distances(X)
        assert np.array_equal(D.dist, D.dist.T)
        assert np.all(np.diag(D.dist) == 0) and np.all(D.dist >= 0)
        np.testing.assert_allclose(D.dist**2, D.d2, atol=1e-9)
        n = X.shape[0]
        tri = D.dist[:, None, :] <= D.dist[:, :, None] + D.dist[None, :, :] + 1e-9
        assert tri.all(), n


class TestNormalize:
    def test_345(self):
        np.testing.assert_allclose(numcore.l2_normalize_rows([[3, 4]]), [[0.6, 0.8]], atol=1e-15)

    def test_unit_row_unchanged(self):
        np.testing.assert_array_equal(numcore.l2_normalize_rows([[0.0, 1.0]]), [[0.0, 1.0]])

    def test_zero_row_named(self):
        with pytest.raises(DegenerateError, match="row 1"):
            numcore.l2_normalize_rows([[1, 0], [0, 0]])

    @given(matrices())
    @settings(max_examples=50, deadline=None)
    def test_unit_norms(self, X):
        X = X + 11.0  # keeps every row away from zero
        U = numcore.l2_normalize_rows(X)
        np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)


class TestGaussianWeights:
    def test_values(self):
        D = numcore.DistanceMatrix(d2=np.array([[0.0, 1.0], [1.0, 0.0]]), dist=np.array([[0, 1.0], [1.0, 0]]))
        W = numcore.gaussian_weights(D, 1.0)
        assert W[0, 0] == 1.0
        assert W[0, 1] == pytest.approx(math.exp(-1))

    def test_orthogonal_units(self):
        W = numcore.gaussian_weights(numcore.pairwise_distances(np.eye(2)), 1.0)
        assert W[0, 1] == pytest.approx(0.1353352832366127, abs=1e-12)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_bad_sigma(self, sigma):
        with pytest.raises(InvalidParameterError):
            numcore.gaussian_weights(numcore.pairwise_distances(np.eye(2)), sigma)

    def test_monotone_in_distance(self, rng):
        D = numcore.pairwise_distances(rng.normal(size=(20, 3)))
        W = numcore.gaussian_weights(D, 0.7)
        iu = np.triu_indices(20, 1)
        order = np.argsort(D.d2[iu], kind="stable")
        assert np.all(np.diff(W[iu][order]) <= 0)
        assert np.all((W >= 0) & (W <= 1)) and np.array_equal(W, W.T)


class TestRelativeDistances:
    def test_fixture(self):
        r = numcore.relative_distances(numcore.pairwise_distances([[0.0], [1.0], [3.0]]))
        assert r[0, 1] == pytest.approx(0.75)
        assert r[1, 2] == pytest.approx(2.0)
        assert r[2, 0] == pytest.approx(1.8)
        pts = [[0.0], [1.0], [3.0]]
        for i in range(3):
            for j in range(3):
                expected = bruteforce.dist(pts[i], pts[j]) / bruteforce.anchor_mean(pts, i)
                assert r[i, j] == pytest.approx(expected, abs=1e-15)
        assert np.all(np.diag(r) == 0)

    @pytest.mark.parametrize("c", [1e-3, 0.1, 10.0, 1e3])
    def test_scale_invariant(self, rng, c):
        X = rng.normal(size=(7, 3))
        r1 = numcore.relative_distances(numcore.pairwise_distances(X))
        r2 = numcore.relative_distances(numcore.pairwise_distances(c * X))
        np.testing.assert_allclose(r1, r2, atol=1e-9)

    def test_coincident(self):
        with pytest.raises(DegenerateError):
            numcore.relative_distances(numcore.pairwise_distances(np.zeros((4, 2))))

    def test_too_small(self):
        with pytest.raises(BatchTooSmallError):
            numcore.relative_distances(numcore.pairwise_distances([[0.0], [1.0]]))


class TestSingularValues:
    def test_identity(self):
        np.testing.assert_allclose(numcore.singular_values(np.eye(2)), [1, 1])

    def test_rank_one(self):
        np.testing.assert_allclose(numcore.singular_values([[1, 0], [1, 0]]), [math.sqrt(2), 0], atol=1e-15)

    def test_diag_sorted(self):
        np.testing.assert_allclose(numcore.singular_values(np.diag([3.0, 4.0])), [4, 3])

    @pytest.mark.parametrize("shape", [(1, 1), (1, 5), (5, 1), (6, 3), (3, 6), (7, 7), (40, 17), (200, 64)])
    def test_against_lapack(self, rng, shape):
        X = rng.normal(size=shape)
        s = numcore.singular_values(X)
        ref = np.linalg.svd(X, compute_uv=False)
        assert s.shape == (min(shape),)
        np.testing.assert_allclose(s, ref, rtol=1e-10, atol=1e-12)

    @given(matrices(max_rows=9, max_cols=9))
    @settings(max_examples=60, deadline=None)
    def test_frobenius_and_transpose(self, X):
        s = numcore.singular_values(X)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        fro = float(np.sum(X * X))
        assert np.sum(s**2) == pytest.approx(fro, rel=1e-6, abs=1e-9)
        np.testing.assert_allclose(numcore.singular_values(X.T), s, rtol=1e-6, atol=1e-9)
