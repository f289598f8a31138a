"""Empirical squared MMD in its full, masked, weighted and IQP-objective forms.

All estimators are the biased V-statistic: double sums include the i == j
terms, so the statistic of a sample against itself is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InvalidInputError
from .kernel import (
    KernelModel,
    as_embedding_set,
    kernel_matrix,
    _check_same_dim,
)


@dataclass(frozen=True)
class PruneProblem:
    """One instance of the cardinality-constrained binary quadratic program.

    ``K`` is the source Gram matrix, ``c`` the source-target affinity row sums
    and ``T`` the mean target-target kernel value.
    """

    K: np.ndarray
    c: np.ndarray
    T: float
    n_source: int
    n_target: int
    subset_size: int

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64)
        c = np.array(self.c, dtype=np.float64).ravel()
        n = int(self.n_source)
        if K.shape != (n, n):
            raise InvalidInputError(f"K must be {n}x{n}, got {K.shape}")
        if c.shape != (n,):
            raise InvalidInputError(f"c must have length {n}, got {c.shape[0]}")
        if int(self.n_target) < 1:
            raise InvalidInputError("n_target must be positive")
        if not 1 <= int(self.subset_size) <= n:
            raise InvalidInputError(
                f"subset_size must lie in [1, {n}], got {self.subset_size}"
            )
        if not self.T > 0:
            raise InvalidInputError("target self-term must be positive")
        K.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_source", n)
        object.__setattr__(self, "n_target", int(self.n_target))
        object.__setattr__(self, "subset_size", int(self.subset_size))

    def with_subset_size(self, subset_size: int) -> "PruneProblem":
        return PruneProblem(self.K, self.c, self.T, self.n_source, self.n_target, subset_size)


@dataclass(frozen=True)
class PruneMask:
    """Binary keep/drop vector over the source rows."""

    bits: np.ndarray
    subset_size: Optional[int] = None

    def __post_init__(self):
        raw = np.asarray(self.bits)
        if raw.ndim != 1:
            raise InvalidInputError("mask must be one-dimensional")
        if not np.all((raw == 0) | (raw == 1)):
            raise InvalidInputError("mask entries must be 0 or 1")
        bits = raw.astype(np.int8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        if self.subset_size is None:
            object.__setattr__(self, "subset_size", int(bits.sum()))
        elif int(bits.sum()) != int(self.subset_size):
            raise InvalidInputError(
                f"mask popcount {int(bits.sum())} != subset_size {self.subset_size}"
            )

    def __len__(self):
        return self.bits.shape[0]

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    @property
    def as_bool(self) -> np.ndarray:
        return self.bits.astype(bool)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __eq__(self, other):
        if not isinstance(other, PruneMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def _mask_vector(problem: PruneProblem, mask) -> np.ndarray:
    bits = mask.bits if isinstance(mask, PruneMask) else PruneMask(mask).bits
    if bits.shape[0] != problem.n_source:
        raise InvalidInputError(
            f"mask length {bits.shape[0]} != n_source {problem.n_source}"
        )
    if bits.sum() < 1:
        raise InvalidInputError("mask selects no rows")
    return bits.astype(np.float64)


def mmd_squared(a, b, model: KernelModel = KernelModel()) -> float:
    """Biased squared MMD between two embedding sets."""
    a = as_embedding_set(a)
    b = as_embedding_set(b)
    _check_same_dim(a, b)
    kaa = kernel_matrix(a, a, model).sum() / a.n ** 2
    kbb = kernel_matrix(b, b, model).sum() / b.n ** 2
    kab = kernel_matrix(a, b, model).sum() / (a.n * b.n)
    return float(kaa + kbb - 2.0 * kab)


def mmd(a, b, model: KernelModel = KernelModel()) -> float:
    """Reported MMD: square root of the clipped squared statistic."""
    return float(np.sqrt(max(mmd_squared(a, b, model), 0.0)))


def mmd_from_squared(value: float) -> float:
    return float(np.sqrt(max(value, 0.0)))


def masked_mmd_squared(problem: PruneProblem, mask) -> float:
    """Squared MMD between the masked source rows and the target."""
    u = _mask_vector(problem, mask)
    m = u.sum()
    quad = u @ problem.K @ u
    lin = problem.c @ u
    return float(quad / m ** 2 - 2.0 * lin / (m * problem.n_target) + problem.T)


def iqp_objective(problem: PruneProblem, mask) -> float:
    """Quadratic program objective ``u'Ku / N_ss - 2 c'u / N_t``.

    Equals ``N_ss * (masked_mmd_squared - T)``; ``N_ss`` is the mask popcount.
    """
    u = _mask_vector(problem, mask)
    m = u.sum()
    return float((u @ problem.K @ u) / m - 2.0 * (problem.c @ u) / problem.n_target)


def mmd_from_objective(problem: PruneProblem, objective: float, subset_size: int) -> float:
    """Recover the (unsquared) MMD from a quadratic program objective value."""
    return mmd_from_squared(objective / subset_size + problem.T)


def weighted_mmd_squared(problem: PruneProblem, weights) -> float:
    """Self-normalised weighted squared MMD between source and target.

    ``weights`` may be an array or any object with a ``values`` attribute.
    """
    beta = np.asarray(getattr(weights, "values", weights), dtype=np.float64).ravel()
    if beta.shape != (problem.n_source,):
        raise InvalidInputError(
            f"weights length {beta.shape[0]} != n_source {problem.n_source}"
        )
    if not np.all(np.isfinite(beta)) or np.any(beta < 0):
        raise InvalidInputError("weights must be finite and nonnegative")
    total = beta.sum()
    if total <= 0:
        raise InvalidInputError("weights must not all be zero")
    quad = beta @ problem.K @ beta
    lin = problem.c @ beta
    return float(quad / total ** 2 - 2.0 * lin / (total * problem.n_target) + problem.T)
