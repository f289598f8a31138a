"""Shared oracles: plain scalar loops that never touch the vectorised code paths."""

import math

import numpy as np

from adaprune.kernel import DEFAULT_BANDWIDTHS
from adaprune.solver import build_problem


def scalar_kernel(x, y, bandwidths=DEFAULT_BANDWIDTHS):
    d2 = sum((float(a) - float(b)) ** 2 for a, b in zip(x, y))
    return sum(math.exp(-g * d2) for g in bandwidths)


def scalar_mmd2(a, b, bandwidths=DEFAULT_BANDWIDTHS):
    """Triple-loop biased estimator."""
    n, m = len(a), len(b)
    aa = sum(scalar_kernel(a[i], a[j], bandwidths) for i in range(n) for j in range(n)) / n ** 2
    bb = sum(scalar_kernel(b[i], b[j], bandwidths) for i in range(m) for j in range(m)) / m ** 2
    ab = sum(scalar_kernel(a[i], b[j], bandwidths) for i in range(n) for j in range(m)) / (n * m)
    return aa + bb - 2 * ab


def scalar_weighted_mmd2(a, b, beta, bandwidths=DEFAULT_BANDWIDTHS):
    s = float(sum(beta))
    n, m = len(a), len(b)
    aa = sum(beta[i] * beta[j] * scalar_kernel(a[i], a[j], bandwidths)
             for i in range(n) for j in range(n)) / s ** 2
    bb = sum(scalar_kernel(b[i], b[j], bandwidths) for i in range(m) for j in range(m)) / m ** 2
    ab = sum(beta[i] * scalar_kernel(a[i], b[j], bandwidths)
             for i in range(n) for j in range(m)) / (s * m)
    return aa + bb - 2 * ab


def random_instance(rng, n_s, n_t, d, subset_size, spread=1.5):
    source = rng.normal(scale=spread, size=(n_s, d))
    target = rng.normal(loc=0.5, scale=spread, size=(n_t, d))
    return source, target, build_problem(source, target, subset_size=subset_size)


def small_instances(count, seed=0, max_source=10, max_dim=4, max_target=8):
    """Yield ``(source, target, problem)`` over random shapes and every feasible size."""
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        n_s = int(rng.integers(2, max_source + 1))
        d = int(rng.integers(1, max_dim + 1))
        n_t = int(rng.integers(1, max_target + 1))
        source = rng.normal(scale=1.5, size=(n_s, d))
        target = rng.normal(loc=0.5, scale=1.5, size=(n_t, d))
        base = build_problem(source, target, subset_size=1)
        for m in range(1, n_s + 1):
            yield source, target, base.with_subset_size(m)
            produced += 1
            if produced >= count:
                return


# acceptance outcomes, printed by the terminal summary hook in conftest
ACCEPTANCE = {}


def report(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    return bool(passed)
