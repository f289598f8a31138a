import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaprune.exceptions import InvalidInputError
from adaprune.kernel import (
    DEFAULT_BANDWIDTHS,
    EmbeddingSet,
    KernelModel,
    cross_affinity,
    gram_source,
    kernel_matrix,
    rbf_mixture,
    target_self_term,
)

from oracles import scalar_kernel

G = len(DEFAULT_BANDWIDTHS)


class TestKernelModel:
    def test_defaults(self):
        assert KernelModel().bandwidths == (0.001, 0.01, 0.1, 1.0, 10.0)
        assert KernelModel().size == 5

    @pytest.mark.parametrize("bad", [(), (0.0,), (-1.0,), (1.0, 1.0), (float("nan"),), (float("inf"),)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(InvalidInputError):
            KernelModel(bad)

    def test_order_does_not_matter(self):
        assert KernelModel((10.0, 0.1)) == KernelModel((0.1, 10.0))


class TestRbfMixture:
    def test_zero_distance_sums_to_size(self):
        assert rbf_mixture([0.3, -2.0], [0.3, -2.0]) == 5.0

    def test_decays_far_away(self):
        assert rbf_mixture([0.0], [1e3]) < 1e-12

    def test_single_term(self):
        assert rbf_mixture([0.0], [1.0], KernelModel((1.0,))) == pytest.approx(0.36787944117, abs=1e-11)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            rbf_mixture([0.0, 1.0], [0.0])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, 3, elements=st.floats(-50, 50)),
           arrays(np.float64, 3, elements=st.floats(-50, 50)))
    def test_symmetric_and_bounded(self, x, y):
        v = rbf_mixture(x, y)
        assert v == rbf_mixture(y, x)
        assert 0.0 <= v <= G


class TestGram:
    def test_single_row(self):
        np.testing.assert_array_equal(gram_source(np.array([[1.0, 2.0]])), [[5.0]])

    def test_duplicate_rows(self):
        K = gram_source(np.array([[1.0, 1.0], [1.0, 1.0]]))
        np.testing.assert_array_equal(K, np.full((2, 2), 5.0))

    def test_matches_scalar_oracle(self, rng):
        X = rng.normal(size=(3, 2))
        K = gram_source(X)
        for i in range(3):
            for j in range(3):
                assert K[i, j] == pytest.approx(scalar_kernel(X[i], X[j]), abs=1e-12)

    def test_exactly_symmetric_with_exact_diagonal(self, rng):
        K = gram_source(rng.normal(size=(40, 5)) * 3)
        np.testing.assert_array_equal(K, K.T)
        np.testing.assert_array_equal(np.diag(K), np.full(40, 5.0))

    def test_positive_semidefinite(self, rng):
        K = gram_source(rng.normal(size=(30, 2)))
        assert np.linalg.eigvalsh(K).min() > -1e-9

    def test_large_offsets_keep_precision(self):
        # direct differences avoid the ||a||^2 + ||b||^2 - 2ab cancellation
        X = np.array([[1e8, 0.0], [1e8 + 1.0, 0.0]])
        K = gram_source(X, KernelModel((1.0,)))
        assert K[0, 1] == pytest.approx(math.exp(-1.0), rel=1e-12)


class TestCrossAffinity:
    def test_coincident_rows(self):
        src = np.zeros((2, 2))
        tgt = np.zeros((4, 2))
        np.testing.assert_array_equal(cross_affinity(src, tgt), [20.0, 20.0])

    def test_far_row(self):
        tgt = np.random.default_rng(1).normal(size=(5, 2))
        c = cross_affinity(np.array([[1e3, 0.0]]), tgt)
        assert c[0] < 1e-10

    def test_matches_double_loop(self, rng):
        S = rng.normal(size=(4, 2))
        T = rng.normal(size=(3, 2))
        expected = [sum(scalar_kernel(S[i], T[j]) for j in range(3)) for i in range(4)]
        np.testing.assert_allclose(cross_affinity(S, T), expected, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            cross_affinity(np.zeros((2, 2)), np.zeros((2, 3)))


class TestTargetSelfTerm:
    def test_single_row(self):
        assert target_self_term(np.array([[4.0, 4.0]])) == 5.0

    def test_identical_rows(self):
        assert target_self_term(np.ones((6, 3))) == pytest.approx(5.0, abs=1e-14)

    def test_matches_double_loop(self, rng):
        T = rng.normal(size=(3, 2))
        expected = sum(scalar_kernel(a, b) for a in T for b in T) / 9
        assert target_self_term(T) == pytest.approx(expected, abs=1e-12)


def test_kernel_matrix_shape(rng):
    assert kernel_matrix(rng.normal(size=(3, 2)), rng.normal(size=(7, 2))).shape == (3, 7)


class TestEmbeddingSet:
    def test_read_only(self):
        emb = EmbeddingSet(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            emb.data[0, 0] = 1.0

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            EmbeddingSet(np.array([[np.nan, 0.0]]))

    def test_rejects_label_count(self):
        with pytest.raises(InvalidInputError):
            EmbeddingSet(np.zeros((3, 1)), np.array([0, 1]))

    def test_subset_keeps_labels(self):
        emb = EmbeddingSet(np.arange(6.0).reshape(3, 2), np.array([4, 5, 6]))
        sub = emb.subset(np.array([True, False, True]))
        np.testing.assert_array_equal(sub.labels, [4, 6])
        assert emb.unlabelled().labels is None
