import math

import numpy as np
import pytest
from scipy import stats

from adaprune.evaluation import (
    EvalReport,
    SynthSpec,
    apportion,
    evaluate_pipeline,
    irrelevant_cluster_spec,
    knn_predict,
    pearson,
    same_distribution_spec,
    source_cluster_ids,
    split_train_val,
    splitmix64,
    sweep_mmd_accuracy,
    synth_domain_pair,
    train_eval_knn,
)
from adaprune.exceptions import InvalidInputError, UndefinedCorrelationError
from adaprune.kernel import EmbeddingSet
from adaprune.mmd import mmd_squared


class TestPrng:
    def test_splitmix_reference_vectors(self):
        # first two outputs of the reference splitmix64 generator started at state 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4

    def test_apportion(self):
        assert list(apportion(200, [0.7, 0.3])) == [140, 60]
        assert list(apportion(10, [1 / 3, 1 / 3, 1 / 3])) == [4, 3, 3]
        assert apportion(7, [0.5, 0.5]).sum() == 7


class TestSynth:
    def test_same_distribution_mmd_small(self):
        src, tgt = synth_domain_pair(same_distribution_spec(seed=3))
        assert src.n == tgt.n == 500
        assert mmd_squared(src.data, tgt.data) < 0.05 * 5

    def test_irrelevant_cluster_layout(self):
        spec = irrelevant_cluster_spec(seed=1)
        src, tgt = synth_domain_pair(spec)
        ids = source_cluster_ids(spec)
        assert (ids == 0).sum() == 140 and (ids == 1).sum() == 60
        np.testing.assert_array_equal(src.labels, ids)
        assert np.all(tgt.labels == 0)
        far = src.data[ids == 1].mean(axis=0)
        assert far[0] == pytest.approx(20.0, abs=0.5)

    def test_deterministic_bytes(self):
        a = synth_domain_pair(irrelevant_cluster_spec(seed=9))
        b = synth_domain_pair(irrelevant_cluster_spec(seed=9))
        assert a[0].data.tobytes() == b[0].data.tobytes()
        assert a[1].data.tobytes() == b[1].data.tobytes()

    def test_seeds_differ(self):
        a, _ = synth_domain_pair(irrelevant_cluster_spec(seed=1))
        b, _ = synth_domain_pair(irrelevant_cluster_spec(seed=2))
        assert not np.array_equal(a.data, b.data)

    @pytest.mark.parametrize("change", [
        {"source_weights": [0.5, 0.4]},
        {"source_weights": [1.0, 0.0], "target_weights": [0.5, 0.5]},
        {"sigmas": [1.0, 0.0]},
        {"means": [[0.0, 0.0], [1.0]]},
        {"labels": [0]},
    ])
    def test_invalid_specs(self, change):
        fields = irrelevant_cluster_spec().to_dict()
        fields.update(change)
        with pytest.raises(InvalidInputError):
            synth_domain_pair(SynthSpec(**fields))


def brute_knn(train_x, train_y, query, k):
    dists = [sum((a - b) ** 2 for a, b in zip(row, query)) for row in train_x]
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    votes = {}
    for i in order:
        votes[int(train_y[i])] = votes.get(int(train_y[i]), 0) + 1
    top = max(votes.values())
    return min(lbl for lbl, v in votes.items() if v == top)


class TestKnn:
    def test_self_neighbours(self, rng):
        data = EmbeddingSet(rng.normal(size=(30, 3)), rng.integers(0, 4, 30))
        assert train_eval_knn(data, data, 1) == 1.0

    def test_separated_clusters(self):
        src, _ = synth_domain_pair(irrelevant_cluster_spec(seed=4))
        train, test = split_train_val(src, 0.8, seed=4)
        assert train_eval_knn(train, test, 1) == 1.0

    def test_matches_double_loop(self, rng):
        X = rng.integers(0, 3, size=(25, 2)).astype(float)  # lattice points force distance ties
        y = rng.integers(0, 3, 25)
        Q = rng.integers(0, 3, size=(15, 2)).astype(float)
        for k in (1, 2, 4, 7):
            expected = [brute_knn(X, y, q, k) for q in Q]
            np.testing.assert_array_equal(knn_predict(EmbeddingSet(X, y), Q, k), expected)

    def test_vote_tie_goes_to_smallest_label(self):
        train = EmbeddingSet(np.array([[1.0], [-1.0]]), np.array([5, 2]))
        assert knn_predict(train, np.array([[0.0]]), 2)[0] == 2

    def test_requires_labels(self, rng):
        with pytest.raises(InvalidInputError):
            train_eval_knn(EmbeddingSet(rng.normal(size=(3, 2))), EmbeddingSet(rng.normal(size=(3, 2)), [0, 0, 1]))

    def test_k_range(self, rng):
        data = EmbeddingSet(rng.normal(size=(3, 2)), [0, 1, 1])
        with pytest.raises(InvalidInputError):
            train_eval_knn(data, data, 4)


class TestSplit:
    def test_eighty_twenty(self, rng):
        train, val = split_train_val(EmbeddingSet(rng.normal(size=(10, 2)), np.arange(10)), 0.8, seed=1)
        assert (train.n, val.n) == (8, 2)
        assert sorted(np.r_[train.labels, val.labels]) == list(range(10))

    def test_two_rows(self, rng):
        train, val = split_train_val(EmbeddingSet(rng.normal(size=(2, 2))), 0.5)
        assert train.n == val.n == 1

    def test_deterministic(self, rng):
        data = EmbeddingSet(rng.normal(size=(20, 2)), np.arange(20))
        a, _ = split_train_val(data, 0.7, seed=5)
        b, _ = split_train_val(data, 0.7, seed=5)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_guards(self, rng):
        with pytest.raises(InvalidInputError):
            split_train_val(EmbeddingSet(rng.normal(size=(1, 2))), 0.5)
        with pytest.raises(InvalidInputError):
            split_train_val(EmbeddingSet(rng.normal(size=(4, 2))), 1.0)


class TestPearson:
    def test_perfect_line(self):
        xs = np.arange(10.0)
        r, p = pearson(xs, 2 * xs + 1)
        assert r == pytest.approx(1.0) and p < 1e-12

    def test_negative_line(self):
        assert pearson([1.0, 2.0, 4.0, 5.0], [-1.0, -2.0, -4.0, -5.0])[0] == pytest.approx(-1.0)

    def test_hand_summation_table(self):
        xs = [43, 21, 25, 42, 57, 59, 62, 37, 49, 31]
        ys = [99, 65, 79, 75, 87, 81, 90, 62, 94, 70]
        n = len(xs)
        sx, sy = sum(xs), sum(ys)
        sxy = sum(a * b for a, b in zip(xs, ys))
        sxx, syy = sum(a * a for a in xs), sum(b * b for b in ys)
        r_hand = (n * sxy - sx * sy) / math.sqrt((n * sxx - sx ** 2) * (n * syy - sy ** 2))
        t = r_hand * math.sqrt((n - 2) / (1 - r_hand ** 2))
        p_hand = 2 * stats.t.sf(abs(t), n - 2)
        r, p = pearson(xs, ys)
        assert r == pytest.approx(r_hand, abs=1e-12)
        assert p == pytest.approx(p_hand, rel=1e-9)
        ref = stats.pearsonr(xs, ys)
        assert r == pytest.approx(ref.statistic, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_constant_vector(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1, 2, 3], [4, 4, 4])

    def test_p_decreases_with_abs_r(self, rng):
        x = rng.normal(size=30)
        noise = rng.normal(size=30)
        ps = [pearson(x, x + s * noise)[1] for s in (4.0, 2.0, 1.0, 0.5)]
        assert ps == sorted(ps, reverse=True)

    def test_length_checks(self):
        with pytest.raises(InvalidInputError):
            pearson([1, 2], [1, 2])
        with pytest.raises(InvalidInputError):
            pearson([1, 2, 3], [1, 2])


SMALL_SPEC = irrelevant_cluster_spec(samples_source=30, samples_target=15)


class TestSweep:
    def test_row_count_and_order(self):
        table = sweep_mmd_accuracy(SMALL_SPEC, [0.5, 0.2, 0.8], [1, 0], node_budget=50)
        assert table.n == 6
        assert [(r[0], r[1]) for r in table.rows] == sorted((r[0], r[1]) for r in table.rows)
        assert all(0 <= r[3] <= 1 for r in table.rows)

    def test_null_case_does_not_crash(self):
        table = sweep_mmd_accuracy(same_distribution_spec(samples=20), [0.3, 0.9], [0, 1], node_budget=20)
        assert table.n == 4
        assert math.isnan(table.r) or -1 <= table.r <= 1

    def test_parallel_equals_serial(self):
        a = sweep_mmd_accuracy(SMALL_SPEC, [0.4, 0.9], [0, 1, 2], node_budget=20, n_jobs=1)
        b = sweep_mmd_accuracy(SMALL_SPEC, [0.4, 0.9], [0, 1, 2], node_budget=20, n_jobs=2)
        assert a.rows == b.rows

    def test_ratio_range(self):
        with pytest.raises(InvalidInputError):
            sweep_mmd_accuracy(SMALL_SPEC, [0.1], [0])


class TestPipeline:
    @pytest.fixture
    def domains(self):
        return synth_domain_pair(irrelevant_cluster_spec(seed=2, samples_source=40, samples_target=20))

    def test_none_is_identity(self, domains):
        rep = evaluate_pipeline(*domains, method="none")
        assert rep.mmd_before == rep.mmd_after and rep.accuracy_before == rep.accuracy_after
        assert rep.fraction_removed == 0.0

    def test_full_ratio_is_identity(self, domains):
        rep = evaluate_pipeline(*domains, method="adaprune", params={"ratio": 1.0})
        assert rep.fraction_removed == 0.0
        assert rep.mmd_after == rep.mmd_before and rep.accuracy_after == rep.accuracy_before

    def test_true_ratio_improves(self, domains):
        rep = evaluate_pipeline(*domains, method="adaprune", params={"ratio": 0.7, "node_budget": 200})
        assert rep.mmd_after < rep.mmd_before
        assert rep.accuracy_after >= rep.accuracy_before
        assert rep.fraction_removed == pytest.approx(1 - 28 / 40, abs=1e-15)

    @pytest.mark.parametrize("method", ["kmm", "landmarks", "coral"])
    def test_baselines_report(self, domains, method):
        rep = evaluate_pipeline(*domains, method=method, params={"threshold": 0.7})
        assert isinstance(rep, EvalReport)
        assert 0 <= rep.accuracy_after <= 1 and 0 <= rep.fraction_removed < 1
        if method in ("kmm", "coral"):
            assert rep.fraction_removed == 0.0

    def test_label_hygiene(self, domains):
        src, tgt = domains
        shuffled = EmbeddingSet(tgt.data, tgt.labels[::-1] * 0 + 1)
        a = evaluate_pipeline(src, tgt, method="adaprune", params={"ratio": 0.7})
        b = evaluate_pipeline(src, shuffled, method="adaprune", params={"ratio": 0.7})
        assert a.mmd_after == b.mmd_after

    def test_unknown_method(self, domains):
        with pytest.raises(InvalidInputError):
            evaluate_pipeline(*domains, method="dro")
