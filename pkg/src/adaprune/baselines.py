"""Comparison methods: kernel mean matching, landmark thresholding and CORAL."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .kernel import EmbeddingSet, KernelModel, as_embedding_set
from .mmd import PruneMask, weighted_mmd_squared
from .projection import project_box_sum_band, project_capped_simplex
from .solver import _power_lambda_max, build_problem, solve_relaxation, subset_size_for_ratio

KMM_BOX_CAP = 1000.0
KMM_MAX_ITER = 10_000
KMM_TOL = 1e-10
LANDMARK_CUTOFF = 0.5


def default_sum_tolerance(n_source: int) -> float:
    """``(sqrt(N_s) - 1) / sqrt(N_s)``, the usual KMM sum band."""
    root = math.sqrt(n_source)
    return (root - 1.0) / root


@dataclass(frozen=True)
class WeightVector:
    values: np.ndarray
    box_cap: float
    sum_tolerance: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def is_feasible(self, atol: float = 1e-10) -> bool:
        v = self.values
        n = v.shape[0]
        in_box = np.all(v >= -atol) and np.all(v <= self.box_cap + atol)
        in_band = abs(v.sum() / n - 1.0) <= self.sum_tolerance + atol
        return bool(in_box and in_band)


def _accelerated_pg(objective, gradient, project, L, x0, max_iter, tol):
    """Accelerated projected gradient with momentum restart; returns the best iterate."""
    x = project(x0)
    best, best_val = x, objective(x)
    y, t = x.copy(), 1.0
    for _ in range(max_iter):
        x_new = project(y - gradient(y) / L)
        step = y - x_new
        if step @ (x_new - x) > 0:
            t, y, x = 1.0, x_new.copy(), x_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
        val = objective(x)
        if val < best_val:
            best, best_val = x, val
        if L * np.linalg.norm(step) < tol:
            break
    return best


def kmm_weights(source, target, model: KernelModel = KernelModel(),
                box_cap: float = KMM_BOX_CAP, sum_tolerance=None,
                max_iter: int = KMM_MAX_ITER, tol: float = KMM_TOL) -> WeightVector:
    """Kernel mean matching weights for the source rows.

    Minimises ``b'Kb / N_s^2 - 2 c'b / (N_s N_t)`` over ``0 <= b <= box_cap``,
    ``|sum(b) / N_s - 1| <= sum_tolerance``, starting from uniform weights.

    That objective fixes the normaliser at ``N_s`` while the sum may drift,
    so its minimiser can score worse than uniform weights under the
    self-normalised weighted MMD. When that happens the weights are instead
    taken from the scale-invariant problem: the same objective over
    ``sum(b) = N_s`` with each weight capped at ``box_cap / (1 - sum_tolerance)``,
    rescaled back into the box. Uniform weights are feasible there, so the
    result never loses to them.
    """
    source = as_embedding_set(source)
    target = as_embedding_set(target)
    n = source.n
    if sum_tolerance is None:
        sum_tolerance = default_sum_tolerance(n)
    if box_cap < 1:
        raise InvalidInputError(f"box_cap must be at least 1, got {box_cap}")
    if sum_tolerance < 0:
        raise InvalidInputError("sum_tolerance must be nonnegative")
    if box_cap * n < n * (1.0 - sum_tolerance):
        raise InvalidInputError("box and sum constraints are jointly infeasible")

    problem = build_problem(source, target, model, 1)
    K, c, n_t = problem.K, problem.c, problem.n_target

    def objective(b):
        return (b @ K @ b) / n ** 2 - 2.0 * (c @ b) / (n * n_t)

    def gradient(b):
        return (2.0 / n ** 2) * (K @ b) - (2.0 / (n * n_t)) * c

    L = max(2.0 * _power_lambda_max(K) * 1.01 / n ** 2, 1e-300)
    lo = n * max(1.0 - sum_tolerance, 0.0)
    hi = min(n * (1.0 + sum_tolerance), n * box_cap)
    uniform = np.ones(n)

    beta = _accelerated_pg(objective, gradient,
                           lambda y: project_box_sum_band(y, lo, hi, box_cap),
                           L, uniform, max_iter, tol)
    if weighted_mmd_squared(problem, beta) > weighted_mmd_squared(problem, uniform):
        cap = float(n) if sum_tolerance >= 1 else min(box_cap / (1.0 - sum_tolerance), float(n))
        beta = _accelerated_pg(objective, gradient,
                               lambda y: project_capped_simplex(y, float(n), cap),
                               L, uniform, max_iter, tol)
        beta = np.clip(beta * min(1.0, box_cap / beta.max()), 0.0, box_cap)
    return WeightVector(beta, float(box_cap), float(sum_tolerance))


def landmark_mask_from_fraction(values, cutoff: float = LANDMARK_CUTOFF) -> PruneMask:
    """Keep coordinates at or above ``cutoff``; fall back to the single largest."""
    values = np.asarray(values, dtype=np.float64)
    bits = (values >= cutoff).astype(np.int8)
    if bits.sum() == 0:
        bits[int(np.argmax(values))] = 1
    return PruneMask(bits)


def landmark_select(source, target, model: KernelModel = KernelModel(),
                    threshold: float = 0.5, cutoff: float = LANDMARK_CUTOFF) -> PruneMask:
    """Relax at ``N_ss = round(threshold * N_s)`` and threshold the fractional solution.

    The popcount of the result is not tied to ``N_ss``.
    """
    if not 0 < threshold < 1:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold}")
    source = as_embedding_set(source)
    size = subset_size_for_ratio(threshold, source.n)
    frac = solve_relaxation(build_problem(source, target, model, size))
    return landmark_mask_from_fraction(frac.values, cutoff)


@dataclass(frozen=True)
class CoralTransform:
    whitening: np.ndarray
    recoloring: np.ndarray
    ridge: float

    @property
    def matrix(self) -> np.ndarray:
        return self.whitening @ self.recoloring

    def apply(self, data) -> np.ndarray:
        return np.asarray(data, dtype=np.float64) @ self.matrix


def _sym_power(C: np.ndarray, power: float) -> np.ndarray:
    w, V = np.linalg.eigh(C)
    if np.any(w <= 0):
        raise InvalidInputError("regularised covariance is not positive definite")
    return (V * w ** power) @ V.T


def coral_transform(source, target, ridge: float = 1.0):
    """Whiten the source covariance and recolour it with the target's.

    Returns ``(transform, transformed_source)``; labels on ``source`` are kept.
    """
    source = as_embedding_set(source)
    target = as_embedding_set(target)
    if ridge <= 0:
        raise InvalidInputError("ridge must be positive")
    if source.n < 2 or target.n < 2:
        raise InvalidInputError("CORAL needs at least two rows per domain")
    if source.dim != target.dim:
        raise InvalidInputError(f"dimension mismatch: {source.dim} vs {target.dim}")
    eye = np.eye(source.dim)
    Cs = np.atleast_2d(np.cov(source.data, rowvar=False)) + ridge * eye
    Ct = np.atleast_2d(np.cov(target.data, rowvar=False)) + ridge * eye
    try:
        tf = CoralTransform(_sym_power(Cs, -0.5), _sym_power(Ct, 0.5), float(ridge))
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError(f"covariance eigendecomposition failed: {exc}") from None
    return tf, EmbeddingSet(tf.apply(source.data), source.labels)
