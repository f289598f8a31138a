"""Synthetic domain-shift benchmarks and downstream evaluation.

Random streams
--------------
Every random draw comes from numpy's ``PCG64`` bit generator. Each stream
gets its own 64-bit seed derived from the user seed by splitmix64 expansion::

    stream_seed(seed, stream) = splitmix64(seed ^ splitmix64(stream))

Source cluster ``k`` uses stream ``2 * k``, target cluster ``k`` uses
stream ``2 * k + 1`` and the train/validation shuffle uses stream
``2**32``. Samples are drawn with ``Generator.standard_normal`` and rows
are laid out cluster by cluster in cluster order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import betainc

from .exceptions import InvalidInputError, UndefinedCorrelationError
from .kernel import EmbeddingSet, KernelModel, as_embedding_set, pairwise_sqdist
from .mmd import mmd, mmd_from_squared, weighted_mmd_squared
from .solver import (
    DEFAULT_NODE_BUDGET,
    build_problem,
    solve_branch_bound,
    subset_size_for_ratio,
)

_MASK64 = (1 << 64) - 1
SHUFFLE_STREAM = 1 << 32


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream_seed(seed: int, stream: int) -> int:
    return splitmix64((int(seed) & _MASK64) ^ splitmix64(int(stream)))


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(seed, stream)))


@dataclass(frozen=True)
class SynthSpec:
    """Isotropic Gaussian mixture pair; the target uses a subset of the source clusters."""

    dimension: int
    means: Sequence[Sequence[float]]
    sigmas: Sequence[float]
    source_weights: Sequence[float]
    target_weights: Sequence[float]
    labels: Sequence[int]
    samples_source: int
    samples_target: int
    seed: int = 0

    def validate(self):
        k = len(self.means)
        if self.dimension < 1 or k < 1:
            raise InvalidInputError("need dimension >= 1 and at least one cluster")
        for name in ("sigmas", "source_weights", "target_weights", "labels"):
            if len(getattr(self, name)) != k:
                raise InvalidInputError(f"{name} must have one entry per cluster")
        for mean in self.means:
            if len(mean) != self.dimension:
                raise InvalidInputError("cluster mean has the wrong dimension")
        if any(not s > 0 for s in self.sigmas):
            raise InvalidInputError("cluster sigmas must be positive")
        for name in ("source_weights", "target_weights"):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidInputError(f"{name} must be a probability vector")
        src = np.asarray(self.source_weights)
        tgt = np.asarray(self.target_weights)
        if np.any((src == 0) & (tgt > 0)):
            raise InvalidInputError("target support must lie inside the source support")
        if self.samples_source < 1 or self.samples_target < 1:
            raise InvalidInputError("sample counts must be positive")
        return self

    def with_seed(self, seed: int) -> "SynthSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["means"] = [list(map(float, m)) for m in self.means]
        return d


def irrelevant_cluster_spec(seed: int = 0, dimension: int = 2, separation: float = 20.0,
                            sigma: float = 1.0, samples_source: int = 200,
                            samples_target: int = 100) -> SynthSpec:
    """70% relevant / 30% irrelevant source, target drawn from the relevant cluster only."""
    far = [0.0] * dimension
    far[0] = separation * sigma
    return SynthSpec(
        dimension=dimension,
        means=[[0.0] * dimension, far],
        sigmas=[sigma, sigma],
        source_weights=[0.7, 0.3],
        target_weights=[1.0, 0.0],
        labels=[0, 1],
        samples_source=samples_source,
        samples_target=samples_target,
        seed=seed,
    )


def same_distribution_spec(seed: int = 0, dimension: int = 2, samples: int = 500) -> SynthSpec:
    return SynthSpec(
        dimension=dimension,
        means=[[0.0] * dimension],
        sigmas=[1.0],
        source_weights=[1.0],
        target_weights=[1.0],
        labels=[0],
        samples_source=samples,
        samples_target=samples,
        seed=seed,
    )


PRESETS = {
    "irrelevant-cluster": irrelevant_cluster_spec,
    "same-distribution": same_distribution_spec,
}


def apportion(total: int, weights) -> np.ndarray:
    """Largest-remainder split of ``total`` samples; remainder ties go to the lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    exact = w * total
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    order = np.lexsort((np.arange(w.shape[0]), -(exact - counts)))
    counts[order[:short]] += 1
    return counts


def _draw(spec: SynthSpec, weights, n: int, parity: int) -> EmbeddingSet:
    counts = apportion(n, weights)
    blocks, labels = [], []
    for k, count in enumerate(counts):
        if count == 0:
            continue
        rng = stream_rng(spec.seed, 2 * k + parity)
        mean = np.asarray(spec.means[k], dtype=np.float64)
        blocks.append(mean + spec.sigmas[k] * rng.standard_normal((int(count), spec.dimension)))
        labels.append(np.full(int(count), int(spec.labels[k]), dtype=np.int64))
    return EmbeddingSet(np.vstack(blocks), np.concatenate(labels))


def synth_domain_pair(spec: SynthSpec) -> Tuple[EmbeddingSet, EmbeddingSet]:
    """Draw labelled source and target sets. Target labels are for scoring only."""
    spec.validate()
    source = _draw(spec, spec.source_weights, spec.samples_source, 0)
    target = _draw(spec, spec.target_weights, spec.samples_target, 1)
    return source, target


def source_cluster_ids(spec: SynthSpec) -> np.ndarray:
    """Cluster index of every source row, in the order produced by :func:`synth_domain_pair`."""
    counts = apportion(spec.samples_source, spec.source_weights)
    return np.repeat(np.arange(len(counts)), counts)


# ---------------------------------------------------------------------------
# downstream classifier
# ---------------------------------------------------------------------------


def knn_predict(train: EmbeddingSet, queries, k: int = 1, weights=None) -> np.ndarray:
    """Majority vote of the k nearest training rows.

    Distance ties go to the lowest training index and vote ties to the
    smallest label. Optional nonnegative ``weights`` scale each vote.
    """
    if train.labels is None:
        raise InvalidInputError("training set must be labelled")
    k = int(k)
    if not 1 <= k <= train.n:
        raise InvalidInputError(f"k must lie in [1, {train.n}], got {k}")
    queries = np.asarray(queries, dtype=np.float64)
    classes, codes = np.unique(train.labels, return_inverse=True)
    w = np.ones(train.n) if weights is None else np.asarray(weights, dtype=np.float64)
    out = np.empty(queries.shape[0], dtype=np.int64)
    step = max(1, 1_000_000 // max(train.n, 1))
    for start in range(0, queries.shape[0], step):
        D = pairwise_sqdist(queries[start:start + step], train.data)
        nearest = np.argsort(D, axis=1, kind="stable")[:, :k]
        votes = np.zeros((nearest.shape[0], classes.shape[0]))
        rows = np.repeat(np.arange(nearest.shape[0]), k)
        np.add.at(votes, (rows, codes[nearest].ravel()), w[nearest].ravel())
        out[start:start + step] = classes[np.argmax(votes, axis=1)]
    return out


def train_eval_knn(train: EmbeddingSet, test: EmbeddingSet, k: int = 1, weights=None) -> float:
    """Fraction of test rows whose k-NN prediction matches their label."""
    if train.labels is None or test.labels is None:
        raise InvalidInputError("train_eval_knn needs labelled train and test sets")
    if train.dim != test.dim:
        raise InvalidInputError(f"dimension mismatch: {train.dim} vs {test.dim}")
    pred = knn_predict(train, test.data, k, weights)
    return float(np.mean(pred == test.labels))


def split_train_val(data: EmbeddingSet, ratio: float = 0.8, seed: int = 0):
    """Shuffled split into ``ceil(ratio * N)`` training rows and the rest.

    The training side is capped at ``N - 1`` so validation is never empty.
    """
    data = as_embedding_set(data)
    if not 0 < ratio < 1:
        raise InvalidInputError(f"ratio must lie in (0, 1), got {ratio}")
    if data.n < 2:
        raise InvalidInputError("need at least two rows to split")
    n_train = min(max(int(math.ceil(ratio * data.n - 1e-9)), 1), data.n - 1)
    perm = stream_rng(seed, SHUFFLE_STREAM).permutation(data.n)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def pearson(xs, ys) -> Tuple[float, float]:
    """Sample correlation and its two-sided p-value (t test, n - 2 degrees of freedom)."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InvalidInputError("pearson inputs must have equal length")
    n = x.shape[0]
    if n < 3:
        raise InvalidInputError("pearson needs at least three points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    p = float(betainc(0.5 * df, 0.5, df / (df + t2)))
    return r, min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# sweeps and pipelines
# ---------------------------------------------------------------------------


@dataclass
class SweepTable:
    rows: List[Tuple[float, int, float, float]]
    r: float
    p: float
    n: int

    @property
    def mmd(self) -> np.ndarray:
        return np.array([row[2] for row in self.rows])

    @property
    def accuracy(self) -> np.ndarray:
        return np.array([row[3] for row in self.rows])


DEFAULT_RATIO_RANGE = (0.20, 0.99)


def _sweep_one(spec, seed, ratios, k, model, node_budget):
    source, target = synth_domain_pair(spec.with_seed(seed))
    base = build_problem(source.data, target.data, model, source.n)
    rows = []
    for ratio in ratios:
        problem = base.with_subset_size(subset_size_for_ratio(ratio, source.n))
        result = solve_branch_bound(problem, node_budget)
        kept = source.subset(result.mask.as_bool)
        rows.append((float(ratio), int(seed), result.mmd, train_eval_knn(kept, target, k)))
    return rows


def sweep_mmd_accuracy(spec: SynthSpec, ratios, seeds, k: int = 1,
                       model: KernelModel = KernelModel(),
                       node_budget: int = 200,
                       ratio_range: Optional[Tuple[float, float]] = DEFAULT_RATIO_RANGE,
                       n_jobs: int = 1) -> SweepTable:
    """Prune at every (ratio, seed), record post-prune MMD and target k-NN accuracy.

    Rows are sorted by (ratio, seed). If the correlation is undefined
    (constant accuracy or MMD) ``r`` and ``p`` are NaN.
    """
    ratios = [float(r) for r in ratios]
    if ratio_range is not None:
        lo, hi = ratio_range
        bad = [r for r in ratios if not lo - 1e-12 <= r <= hi + 1e-12]
        if bad:
            raise InvalidInputError(f"ratios {bad} fall outside [{lo}, {hi}]")
    seeds = [int(s) for s in seeds]
    if n_jobs == 1 or len(seeds) == 1:
        chunks = [_sweep_one(spec, s, ratios, k, model, node_budget) for s in seeds]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs)(
            delayed(_sweep_one)(spec, s, ratios, k, model, node_budget) for s in seeds
        )
    rows = sorted(row for chunk in chunks for row in chunk)
    try:
        r, p = pearson([row[2] for row in rows], [row[3] for row in rows])
    except (UndefinedCorrelationError, InvalidInputError):
        r, p = float("nan"), float("nan")
    return SweepTable(rows, r, p, len(rows))


@dataclass
class EvalReport:
    mmd_before: float
    mmd_after: float
    accuracy_before: float
    accuracy_after: float
    fraction_removed: float
    details: dict = field(default_factory=dict, repr=False)

    def as_row(self) -> dict:
        return {
            "mmd_before": self.mmd_before,
            "mmd_after": self.mmd_after,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "fraction_removed": self.fraction_removed,
        }


METHODS = ("adaprune", "kmm", "landmarks", "coral", "none")


def evaluate_pipeline(source: EmbeddingSet, target: EmbeddingSet,
                      model: KernelModel = KernelModel(), method: str = "adaprune",
                      params: Optional[dict] = None) -> EvalReport:
    """Apply one adaptation method and score it against the labelled target.

    Only ``source.data`` and ``target.data`` reach the adaptation step; the
    target labels are read solely for the accuracy columns.
    """
    from .baselines import coral_transform, kmm_weights, landmark_select

    params = dict(params or {})
    k = int(params.get("k", 1))
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
    if source.labels is None or target.labels is None:
        raise InvalidInputError("evaluation needs labelled source and target sets")

    src_x, tgt_x = source.unlabelled(), target.unlabelled()
    mmd_before = mmd(src_x, tgt_x, model)
    acc_before = train_eval_knn(source, target, k)
    details = {}

    if method == "none":
        return EvalReport(mmd_before, mmd_before, acc_before, acc_before, 0.0)

    if method == "adaprune":
        ratio = float(params.get("ratio", 1.0))
        size = subset_size_for_ratio(ratio, source.n)
        problem = build_problem(src_x, tgt_x, model, size)
        result = solve_branch_bound(problem, int(params.get("node_budget", DEFAULT_NODE_BUDGET)))
        details["status"] = result.status
        kept = source.subset(result.mask.as_bool)
        mmd_after = mmd(kept.unlabelled(), tgt_x, model) if size < source.n else mmd_before
        acc_after = train_eval_knn(kept, target, k) if size < source.n else acc_before
        return EvalReport(mmd_before, mmd_after, acc_before, acc_after, 1.0 - size / source.n, details)

    if method == "landmarks":
        mask = landmark_select(src_x, tgt_x, model, float(params.get("threshold", 0.5)),
                               float(params.get("cutoff", 0.5)))
        kept = source.subset(mask.as_bool)
        acc_after = train_eval_knn(kept, target, min(k, kept.n))
        return EvalReport(mmd_before, mmd(kept.unlabelled(), tgt_x, model), acc_before,
                          acc_after, 1.0 - mask.popcount / source.n)

    if method == "kmm":
        weights = kmm_weights(src_x, tgt_x, model, float(params.get("box_cap", 1000.0)),
                              params.get("sum_tolerance"))
        problem = build_problem(src_x, tgt_x, model, 1)
        mmd_after = mmd_from_squared(weighted_mmd_squared(problem, weights))
        keep = weights.values > 0
        acc_after = train_eval_knn(source.subset(keep), target, min(k, int(keep.sum())),
                                   weights.values[keep])
        return EvalReport(mmd_before, mmd_after, acc_before, acc_after, 0.0)

    _, moved = coral_transform(source, target.unlabelled(), float(params.get("ridge", 1.0)))
    return EvalReport(mmd_before, mmd(moved.unlabelled(), tgt_x, model), acc_before,
                      train_eval_knn(moved, target, k), 0.0)
