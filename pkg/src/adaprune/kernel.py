"""RBF mixture kernel and the Gram / affinity structures built from it.

The kernel is a sum of Gaussian RBFs over a fixed set of bandwidths::

    k(a, b) = sum_{g in G} exp(-g * ||a - b||^2)

Squared distances are always accumulated as ``sum((a_k - b_k)**2)`` rather
than through the ``|a|^2 + |b|^2 - 2 a.b`` expansion, so near-duplicate
points get exact near-zero distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError

DEFAULT_BANDWIDTHS = (0.001, 0.01, 0.1, 1.0, 10.0)

# Upper bound on the number of float64 entries in one broadcast block.
_BLOCK_ENTRIES = 2_000_000


@dataclass(frozen=True)
class KernelModel:
    """Bandwidth set of the RBF mixture kernel, kept in increasing order."""

    bandwidths: tuple = DEFAULT_BANDWIDTHS

    def __post_init__(self):
        try:
            values = tuple(float(g) for g in self.bandwidths)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bandwidths must be real numbers: {exc}") from None
        if not values:
            raise InvalidInputError("bandwidth set must be non-empty")
        if not all(np.isfinite(g) and g > 0 for g in values):
            raise InvalidInputError("bandwidths must be finite and strictly positive")
        values = tuple(sorted(values))
        if any(a == b for a, b in zip(values, values[1:])):
            raise InvalidInputError("bandwidths must be distinct")
        object.__setattr__(self, "bandwidths", values)

    @property
    def size(self) -> int:
        """Number of mixture components; also the kernel value at distance 0."""
        return len(self.bandwidths)

    def from_sqdist(self, sqdist):
        """Evaluate the mixture on an array of squared distances."""
        sqdist = np.asarray(sqdist, dtype=np.float64)
        out = np.exp(-self.bandwidths[0] * sqdist)
        for g in self.bandwidths[1:]:
            out += np.exp(-g * sqdist)
        return out


@dataclass(frozen=True)
class EmbeddingSet:
    """N feature vectors of dimension d with optional integer labels."""

    data: np.ndarray
    labels: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.ndim != 2:
            raise InvalidInputError(f"embedding data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError(f"embedding data must be non-empty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("embedding data contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

        if self.labels is not None:
            raw = np.asarray(self.labels)
            if raw.ndim != 1 or raw.shape[0] != data.shape[0]:
                raise InvalidInputError(
                    f"expected {data.shape[0]} labels, got shape {raw.shape}"
                )
            labels = raw.astype(np.int64)
            if raw.dtype.kind == "f" and not np.array_equal(labels, raw):
                raise InvalidInputError("labels must be integers")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, index) -> "EmbeddingSet":
        """Rows selected by a boolean mask or integer index array."""
        index = np.asarray(index)
        if index.dtype == bool and index.shape != (self.n,):
            raise InvalidInputError("boolean index length must equal the number of rows")
        labels = None if self.labels is None else self.labels[index]
        return EmbeddingSet(self.data[index], labels)

    def unlabelled(self) -> "EmbeddingSet":
        return EmbeddingSet(self.data)


def as_embedding_set(x) -> EmbeddingSet:
    if isinstance(x, EmbeddingSet):
        return x
    return EmbeddingSet(x)


def _check_same_dim(a: EmbeddingSet, b: EmbeddingSet):
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, _BLOCK_ENTRIES // max(1, b.shape[0] * a.shape[1]))
    for start in range(0, a.shape[0], step):
        diff = a[start:start + step, None, :] - b[None, :, :]
        out[start:start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def rbf_mixture(z_a: Sequence[float], z_b: Sequence[float], model: KernelModel = KernelModel()) -> float:
    """Kernel value between two single vectors."""
    a = np.asarray(z_a, dtype=np.float64).ravel()
    b = np.asarray(z_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("vectors must have finite entries")
    diff = a - b
    sq = float(np.dot(diff, diff))
    return float(sum(np.exp(-g * sq) for g in model.bandwidths))


def kernel_matrix(a, b, model: KernelModel = KernelModel()) -> np.ndarray:
    """Rectangular kernel matrix between the rows of two embedding sets."""
    a = as_embedding_set(a)
    b = as_embedding_set(b)
    _check_same_dim(a, b)
    return model.from_sqdist(pairwise_sqdist(a.data, b.data))


def gram_source(source, model: KernelModel = KernelModel()) -> np.ndarray:
    """Symmetric source Gram matrix with diagonal equal to ``model.size``."""
    source = as_embedding_set(source)
    K = model.from_sqdist(pairwise_sqdist(source.data, source.data))
    # mirror the upper triangle so symmetry is exact by construction
    upper = np.triu(K)
    K = upper + np.triu(K, 1).T
    np.fill_diagonal(K, float(model.size))
    return K


def cross_affinity(source, target, model: KernelModel = KernelModel()) -> np.ndarray:
    """Row sums of the source-target kernel matrix (length N_s)."""
    return kernel_matrix(source, target, model).sum(axis=1)


def target_self_term(target, model: KernelModel = KernelModel()) -> float:
    """Mean of the target-target kernel matrix."""
    target = as_embedding_set(target)
    Kt = model.from_sqdist(pairwise_sqdist(target.data, target.data))
    return float(Kt.sum() / target.n ** 2)
