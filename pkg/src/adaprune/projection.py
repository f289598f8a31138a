"""Euclidean projection onto the capped simplex ``{0 <= x <= cap, sum(x) = total}``."""

import numpy as np

from .exceptions import InvalidInputError


def _clipped_sum(ys_sorted, prefix, taus, cap):
    """sum_i clip(y_i - tau, 0, cap) for every tau, using sorted y and prefix sums."""
    n = ys_sorted.shape[0]
    lo = np.searchsorted(ys_sorted, taus, side="right")
    hi = np.searchsorted(ys_sorted, taus + cap, side="left")
    hi = np.maximum(hi, lo)
    mid = prefix[hi] - prefix[lo] - taus * (hi - lo)
    return mid + cap * (n - hi)


def project_capped_simplex(y, total, cap=1.0, tol=1e-12):
    """Project ``y`` onto ``{x : 0 <= x_i <= cap, sum(x) = total}``.

    The projection is ``clip(y - tau, 0, cap)`` for the unique multiplier
    ``tau`` that meets the sum. ``tau`` is located exactly between two sorted
    breakpoints of the piecewise-linear sum and then refined by one Newton
    step so the sum holds to ``tol``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    if cap <= 0:
        raise InvalidInputError("cap must be positive")
    if total < -tol or total > n * cap + tol:
        raise InvalidInputError(f"sum {total} is infeasible for {n} coordinates capped at {cap}")
    if n == 0:
        return y.copy()
    if total <= 0:
        return np.zeros(n)
    if total >= n * cap:
        return np.full(n, float(cap))

    ys = np.sort(y)
    prefix = np.concatenate(([0.0], np.cumsum(ys)))
    bps = np.sort(np.concatenate((y - cap, y)))
    sums = _clipped_sum(ys, prefix, bps, cap)
    # sums is nonincreasing in tau, from n*cap down to 0
    k = int(np.searchsorted(-sums, -total, side="right")) - 1
    k = min(max(k, 0), bps.shape[0] - 2)
    s0, s1 = sums[k], sums[k + 1]
    if s0 > s1:
        tau = bps[k] + (s0 - total) / (s0 - s1) * (bps[k + 1] - bps[k])
    else:
        tau = bps[k]

    x = np.clip(y - tau, 0.0, cap)
    resid = x.sum() - total
    if abs(resid) > tol:
        free = (x > 0) & (x < cap)
        nfree = int(free.sum())
        if nfree:
            x = np.clip(y - (tau + resid / nfree), 0.0, cap)
    return x


def project_box_sum_band(y, lower_sum, upper_sum, cap):
    """Project onto ``{0 <= x <= cap, lower_sum <= sum(x) <= upper_sum}``.

    If clipping to the box already lands inside the band that clip is the
    projection; otherwise the sum constraint is active at the nearer edge.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    x = np.clip(y, 0.0, cap)
    s = x.sum()
    if s < lower_sum:
        return project_capped_simplex(y, lower_sum, cap)
    if s > upper_sum:
        return project_capped_simplex(y, upper_sum, cap)
    return x
