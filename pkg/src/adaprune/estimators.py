"""scikit-learn style wrappers around the functional API.

Every estimator is fitted on a source matrix ``X`` together with the
unlabelled target matrix ``X_target``; target labels are never accepted.

>>> import numpy as np
>>> rng = np.random.default_rng(0)
>>> Xs = np.vstack([rng.normal(size=(14, 2)), rng.normal(size=(6, 2)) + 20])
>>> Xt = rng.normal(size=(10, 2))
>>> pruner = AdaPrune(ratio=0.6).fit(Xs, X_target=Xt)
>>> int(pruner.get_support()[14:].sum())
0
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import (
    KMM_BOX_CAP,
    LANDMARK_CUTOFF,
    coral_transform,
    kmm_weights,
    landmark_select,
)
from .exceptions import InvalidInputError
from .kernel import DEFAULT_BANDWIDTHS, EmbeddingSet, KernelModel
from .mmd import mmd
from .solver import (
    DEFAULT_NODE_BUDGET,
    build_problem,
    solve_branch_bound,
    solve_brute_force,
    solve_greedy_swap,
    solve_relax_round,
    subset_size_for_ratio,
)


def check_embeddings(X, name="X"):
    """Validate a 2-D finite float matrix with at least one row and column."""
    try:
        return check_array(X, dtype=np.float64, ensure_2d=True, input_name=name)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from None


def check_domain_pair(X, X_target):
    if X_target is None:
        raise InvalidInputError("X_target is required")
    X = check_embeddings(X)
    X_target = check_embeddings(X_target, "X_target")
    if X.shape[1] != X_target.shape[1]:
        raise InvalidInputError(
            f"X has {X.shape[1]} features but X_target has {X_target.shape[1]}"
        )
    return X, X_target


class _SelectorMixin(TransformerMixin):
    """Row selection: ``transform`` keeps the rows chosen during ``fit``."""

    def get_support(self, indices=False):
        check_is_fitted(self, "support_")
        return np.flatnonzero(self.support_) if indices else self.support_.copy()

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_embeddings(X)
        if X.shape[0] != self.support_.shape[0]:
            raise InvalidInputError(
                f"expected the {self.support_.shape[0]} rows seen in fit, got {X.shape[0]}"
            )
        return X[self.support_]

    def fit_transform(self, X, y=None, X_target=None):
        return self.fit(X, y, X_target=X_target).transform(X)


class AdaPrune(_SelectorMixin, BaseEstimator):
    """Keep the source subset of a given size with minimal MMD to the target.

    Parameters
    ----------
    ratio : float, default=0.5
        Fraction of source rows to keep; the subset size is
        ``round(ratio * n)`` clamped to ``[1, n]``.
    bandwidths : tuple of float
        RBF mixture bandwidths.
    solver : {"bb", "greedy", "relax", "brute"}, default="bb"
    node_budget : int
        Node cap for branch-and-bound.

    Attributes
    ----------
    support_ : ndarray of bool
    result_ : SolveResult
    mmd_ : float
        MMD between the kept rows and the target.
    """

    def __init__(self, ratio=0.5, bandwidths=DEFAULT_BANDWIDTHS, solver="bb",
                 node_budget=DEFAULT_NODE_BUDGET):
        self.ratio = ratio
        self.bandwidths = bandwidths
        self.solver = solver
        self.node_budget = node_budget

    def fit(self, X, y=None, X_target=None):
        X, X_target = check_domain_pair(X, X_target)
        model = KernelModel(tuple(self.bandwidths))
        size = subset_size_for_ratio(self.ratio, X.shape[0])
        problem = build_problem(X, X_target, model, size)
        if self.solver == "bb":
            result = solve_branch_bound(problem, self.node_budget)
        elif self.solver == "greedy":
            result = solve_greedy_swap(problem, solve_relax_round(problem).mask)
        elif self.solver == "relax":
            result = solve_relax_round(problem)
        elif self.solver == "brute":
            result = solve_brute_force(problem)
        else:
            raise InvalidInputError(f"unknown solver {self.solver!r}")
        self.result_ = result
        self.support_ = result.mask.as_bool
        self.mmd_ = result.mmd
        self.n_features_in_ = X.shape[1]
        return self


class LandmarkSelector(_SelectorMixin, BaseEstimator):
    """Threshold the relaxed pruning problem; the kept count is not fixed."""

    def __init__(self, threshold=0.5, cutoff=LANDMARK_CUTOFF, bandwidths=DEFAULT_BANDWIDTHS):
        self.threshold = threshold
        self.cutoff = cutoff
        self.bandwidths = bandwidths

    def fit(self, X, y=None, X_target=None):
        X, X_target = check_domain_pair(X, X_target)
        model = KernelModel(tuple(self.bandwidths))
        mask = landmark_select(X, X_target, model, self.threshold, self.cutoff)
        self.support_ = mask.as_bool
        self.n_features_in_ = X.shape[1]
        return self


class KernelMeanMatching(BaseEstimator):
    """Source sample weights from kernel mean matching.

    After ``fit``, ``weights_`` holds one nonnegative weight per source row.
    """

    def __init__(self, box_cap=KMM_BOX_CAP, sum_tolerance=None, bandwidths=DEFAULT_BANDWIDTHS):
        self.box_cap = box_cap
        self.sum_tolerance = sum_tolerance
        self.bandwidths = bandwidths

    def fit(self, X, y=None, X_target=None):
        X, X_target = check_domain_pair(X, X_target)
        model = KernelModel(tuple(self.bandwidths))
        self.weight_vector_ = kmm_weights(X, X_target, model, self.box_cap, self.sum_tolerance)
        self.weights_ = np.array(self.weight_vector_.values)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None, X_target=None):
        """Return the weights, the only output this adapter produces."""
        return self.fit(X, y, X_target=X_target).weights_


class CoralAligner(TransformerMixin, BaseEstimator):
    """Map source features so their covariance matches the target's."""

    def __init__(self, ridge=1.0):
        self.ridge = ridge

    def fit(self, X, y=None, X_target=None):
        X, X_target = check_domain_pair(X, X_target)
        self.transform_, _ = coral_transform(EmbeddingSet(X), EmbeddingSet(X_target), self.ridge)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        X = check_embeddings(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.transform_.apply(X)

    def fit_transform(self, X, y=None, X_target=None):
        return self.fit(X, y, X_target=X_target).transform(X)


def mmd_score(X, X_target, bandwidths=DEFAULT_BANDWIDTHS):
    """MMD between two matrices under the RBF mixture kernel."""
    X, X_target = check_domain_pair(X, X_target)
    return mmd(X, X_target, KernelModel(tuple(bandwidths)))
