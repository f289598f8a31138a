"""Solvers for the cardinality-constrained binary quadratic program

    minimise   u'Ku / N_ss - 2 c'u / N_t
    subject to u in {0, 1}^N_s,  sum(u) = N_ss

Exact: exhaustive enumeration and best-first branch-and-bound.
Heuristic: relax-and-round over the capped simplex, and 1-swap local search.

Every bound reported here is a Frank-Wolfe dual bound, ``f(x) + min_s g'(s - x)``
over the feasible polytope, which stays valid for a convex relaxation even
when projected gradient stops before full convergence.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import InstanceTooLargeError, InvalidInputError
from .kernel import KernelModel, as_embedding_set, cross_affinity, gram_source, target_self_term
from .mmd import PruneMask, PruneProblem, mmd_from_objective
from .projection import project_capped_simplex

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE = "feasible"
BUDGET_EXHAUSTED = "budget-exhausted"

BRUTE_FORCE_LIMIT = 10_000_000
DEFAULT_NODE_BUDGET = 1_000_000
RELAX_MAX_ITER = 10_000
RELAX_TOL = 1e-9
RELAX_SLACK = 1e-7
PRUNE_TOL = 1e-9
SWAP_TOL = 1e-12
JITTER = 1e-10
POWER_ITERATIONS = 50


@dataclass
class SolveResult:
    mask: PruneMask
    objective: float
    mmd: float
    lower_bound: float
    node_count: int
    status: str
    trace: Optional[List[tuple]] = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return self.objective - self.lower_bound


@dataclass
class FractionalSolution:
    values: np.ndarray
    objective: float
    lower_bound: float
    iterations: int
    status: str

    @property
    def is_integral(self) -> bool:
        return bool(np.all(np.minimum(self.values, 1.0 - self.values) <= 1e-9))


def build_problem(source, target, model: KernelModel = KernelModel(), subset_size: int = 1) -> PruneProblem:
    """Assemble K, c and T for pruning ``source`` towards ``target``."""
    source = as_embedding_set(source)
    target = as_embedding_set(target)
    if source.dim != target.dim:
        raise InvalidInputError(f"dimension mismatch: {source.dim} vs {target.dim}")
    subset_size = int(subset_size)
    if not 1 <= subset_size <= source.n:
        raise InvalidInputError(f"subset_size must lie in [1, {source.n}], got {subset_size}")
    return PruneProblem(
        K=gram_source(source, model),
        c=cross_affinity(source, target, model),
        T=target_self_term(target, model),
        n_source=source.n,
        n_target=target.n,
        subset_size=subset_size,
    )


def subset_size_for_ratio(ratio: float, n_source: int) -> int:
    """``round(ratio * N_s)`` clamped to ``[1, N_s]``."""
    if not 0 < ratio <= 1:
        raise InvalidInputError(f"ratio must lie in (0, 1], got {ratio}")
    return int(min(max(int(round(ratio * n_source)), 1), n_source))


def _objective(problem: PruneProblem, u: np.ndarray) -> float:
    return float((u @ problem.K @ u) / problem.subset_size - 2.0 * (problem.c @ u) / problem.n_target)


def _result(problem, bits, lower_bound, node_count, status, trace=None) -> SolveResult:
    mask = PruneMask(bits, problem.subset_size)
    obj = _objective(problem, mask.bits.astype(np.float64))
    return SolveResult(
        mask=mask,
        objective=obj,
        mmd=mmd_from_objective(problem, obj, problem.subset_size),
        lower_bound=float(min(lower_bound, obj)),
        node_count=node_count,
        status=status,
        trace=trace,
    )


def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indicator of the k largest values; ties go to the lowest index."""
    order = np.lexsort((np.arange(values.shape[0]), -np.round(values, 9)))
    bits = np.zeros(values.shape[0], dtype=np.int8)
    bits[order[:k]] = 1
    return bits


# ---------------------------------------------------------------------------
# exhaustive enumeration
# ---------------------------------------------------------------------------


def solve_brute_force(problem: PruneProblem, limit: int = BRUTE_FORCE_LIMIT) -> SolveResult:
    """Enumerate every mask of the required popcount.

    Among objectives within 1e-12 of the minimum the lexicographically
    smallest bit vector (index 0 most significant) is returned. Combinations
    come out in decreasing bit-vector order, so that is the last tie seen.
    """
    n, m = problem.n_source, problem.subset_size
    count = math.comb(n, m)
    if count > limit:
        raise InstanceTooLargeError(f"C({n}, {m}) = {count} exceeds the enumeration limit {limit}")

    K, c = problem.K, problem.c
    chunk = max(1, 4_000_000 // (m * m))
    combos = itertools.combinations(range(n), m)
    best_val = np.inf
    best_combo = None
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        idx = np.array(block, dtype=np.intp)
        quad = K[idx[:, :, None], idx[:, None, :]].sum(axis=(1, 2))
        obj = quad / m - 2.0 * c[idx].sum(axis=1) / problem.n_target
        best_val = min(best_val, float(obj.min()))
        ties = np.flatnonzero(obj <= best_val + 1e-12)
        if ties.size:
            best_combo = idx[ties[-1]]

    bits = np.zeros(n, dtype=np.int8)
    bits[best_combo] = 1
    result = _result(problem, bits, -np.inf, count, OPTIMAL)
    result.lower_bound = result.objective
    return result


# ---------------------------------------------------------------------------
# continuous relaxation
# ---------------------------------------------------------------------------


def _power_lambda_max(Q: np.ndarray, iterations: int = POWER_ITERATIONS) -> float:
    v = np.ones(Q.shape[0]) / math.sqrt(Q.shape[0])
    lam = 0.0
    for _ in range(iterations):
        w = Q @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / norm
    return max(lam, float(v @ Q @ v))


class _Relaxation:
    """Shared data for solving the relaxation on any subproblem.

    A subproblem fixes some variables to one (``ones``) and the rest of the
    non-free variables to zero; the free variables sum to ``N_ss - |ones|``.
    """

    def __init__(self, problem: PruneProblem, max_iter=RELAX_MAX_ITER, tol=RELAX_TOL):
        self.problem = problem
        self.max_iter = max_iter
        self.tol = tol
        K = problem.K
        self.jitter = 0.0
        if problem.n_source > 1 and np.linalg.eigvalsh(K)[0] < 0:
            self.jitter = JITTER
            K = K + JITTER * np.eye(problem.n_source)
        self.K = K
        # principal submatrices never exceed the parent's largest eigenvalue
        lam = _power_lambda_max(K) * 1.01
        self.L = max(2.0 * lam / problem.subset_size, 1e-12)

    def solve(self, free, ones, x0=None, cutoff=np.inf):
        """Minimise over the free coordinates.

        Returns ``(values_on_free, objective, lower_bound, iterations, converged)``.
        Stops early once the dual bound reaches ``cutoff``.
        """
        p = self.problem
        K, n_ss, n_t = self.K, p.subset_size, p.n_target
        total = n_ss - ones.shape[0]
        Q = K[np.ix_(free, free)]
        lin = (2.0 / n_ss) * K[np.ix_(free, ones)].sum(axis=1) - (2.0 / n_t) * p.c[free]
        const = K[np.ix_(ones, ones)].sum() / n_ss - (2.0 / n_t) * p.c[ones].sum()
        nf = free.shape[0]
        # the jitter inflates the objective by at most this much
        slack = self.jitter

        def f_and_g(x):
            Qx = Q @ x
            return const + (x @ Qx) / n_ss + lin @ x, (2.0 / n_ss) * Qx + lin

        def dual_bound(x, fx, g):
            if total <= 0:
                smallest = 0.0
            else:
                smallest = np.partition(g, total - 1)[:total].sum() if total < nf else g.sum()
            return fx + smallest - g @ x - slack

        if total <= 0 or total >= nf:
            x = np.full(nf, 1.0 if total >= nf else 0.0)
            fx, _ = f_and_g(x)
            return x, fx, fx - slack, 0, True

        if x0 is None:
            x = np.full(nf, total / nf)
        else:
            x = project_capped_simplex(x0, total)
        L = self.L
        y = x.copy()
        t = 1.0
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            _, gy = f_and_g(y)
            x_new = project_capped_simplex(y - gy / L, total)
            step = y - x_new
            if L * np.linalg.norm(step) < self.tol:
                x = x_new
                converged = True
                break
            if step @ (x_new - x) > 0:
                # gradient-based restart of the momentum
                t = 1.0
                y = x_new.copy()
                x = x_new
                continue
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
            if np.isfinite(cutoff) and it % 10 == 0:
                fx, gx = f_and_g(x)
                if dual_bound(x, fx, gx) >= cutoff:
                    return x, fx, dual_bound(x, fx, gx), it, False
        fx, gx = f_and_g(x)
        return x, fx, min(dual_bound(x, fx, gx), fx), it, converged


def solve_relaxation(problem: PruneProblem, max_iter: int = RELAX_MAX_ITER, tol: float = RELAX_TOL) -> FractionalSolution:
    """Minimise the objective over the capped simplex by accelerated projected gradient."""
    relax = _Relaxation(problem, max_iter=max_iter, tol=tol)
    free = np.arange(problem.n_source)
    ones = np.array([], dtype=np.intp)
    x, fx, lb, it, converged = relax.solve(free, ones)
    x = np.clip(x, 0.0, 1.0)
    return FractionalSolution(
        values=x,
        objective=float(fx),
        lower_bound=float(lb),
        iterations=it,
        status=OPTIMAL if converged else BUDGET_EXHAUSTED,
    )


def _round_fractional(problem: PruneProblem, frac: FractionalSolution) -> SolveResult:
    bits = _top_k(frac.values, problem.subset_size)
    lower = min(frac.objective - RELAX_SLACK, frac.lower_bound)
    return _result(problem, bits, lower, 1, FEASIBLE)


def solve_relax_round(problem: PruneProblem) -> SolveResult:
    """Keep the N_ss largest coordinates of the relaxed solution."""
    return _round_fractional(problem, solve_relaxation(problem))


# ---------------------------------------------------------------------------
# local search
# ---------------------------------------------------------------------------


def solve_greedy_swap(problem: PruneProblem, init) -> SolveResult:
    """Apply the best improving single exchange until none improves by more than 1e-12.

    The objective change of swapping out ``i`` and in ``j`` is computed from
    the running vector ``K u`` in O(1) per pair.
    """
    init = init if isinstance(init, PruneMask) else PruneMask(init)
    if len(init) != problem.n_source:
        raise InvalidInputError(f"mask length {len(init)} != n_source {problem.n_source}")
    if init.popcount != problem.subset_size:
        raise InvalidInputError(
            f"initial mask popcount {init.popcount} != subset_size {problem.subset_size}"
        )
    K, c = problem.K, problem.c
    m, n_t = problem.subset_size, problem.n_target
    u = init.bits.astype(np.float64)
    Ku = K @ u
    diag = np.diag(K)
    swaps = 0
    while True:
        sel = np.flatnonzero(u == 1)
        uns = np.flatnonzero(u == 0)
        if sel.size == 0 or uns.size == 0:
            break
        delta = (
            (2.0 * (Ku[uns][None, :] - Ku[sel][:, None])
             + diag[sel][:, None] + diag[uns][None, :]
             - 2.0 * K[np.ix_(sel, uns)]) / m
            - (2.0 / n_t) * (c[uns][None, :] - c[sel][:, None])
        )
        flat = int(np.argmin(delta))
        a, b = divmod(flat, uns.size)
        if delta[a, b] >= -SWAP_TOL:
            break
        i, j = sel[a], uns[b]
        u[i], u[j] = 0.0, 1.0
        Ku += K[:, j] - K[:, i]
        swaps += 1
    logger.debug("greedy swap finished after %d swaps", swaps)
    return _result(problem, u.astype(np.int8), -np.inf, 0, FEASIBLE)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------


def solve_branch_bound(problem: PruneProblem, node_budget: int = DEFAULT_NODE_BUDGET,
                       record_trace: bool = False) -> SolveResult:
    """Best-first branch-and-bound with capped-simplex relaxation bounds.

    The incumbent starts from greedy swap applied to relax-and-round. Nodes
    branch on the free variable whose relaxed value is nearest 0.5 and are
    pruned when their bound is within 1e-9 of the incumbent. ``node_count``
    counts evaluated nodes, the root included.
    """
    node_budget = int(node_budget)
    if node_budget < 1:
        raise InvalidInputError("node_budget must be at least 1")
    n, m = problem.n_source, problem.subset_size
    trace = [] if record_trace else None

    if m == n:
        bits = np.ones(n, dtype=np.int8)
        res = _result(problem, bits, -np.inf, 1, OPTIMAL, trace)
        res.lower_bound = res.objective
        return res

    relax = _Relaxation(problem)
    all_idx = np.arange(n)
    empty = np.array([], dtype=np.intp)
    x, fx, root_lb, it, _ = relax.solve(all_idx, empty)
    root = FractionalSolution(np.clip(x, 0.0, 1.0), float(fx), float(root_lb), it, OPTIMAL)
    start = _round_fractional(problem, root)
    greedy = solve_greedy_swap(problem, start.mask)
    inc_bits = greedy.mask.bits.copy()
    inc_obj = greedy.objective
    node_count = 1

    def consider(bits):
        nonlocal inc_bits, inc_obj
        val = _objective(problem, bits.astype(np.float64))
        if val < inc_obj - 1e-15:
            inc_obj, inc_bits = val, bits.astype(np.int8)

    # node: (bound, seq, ones, zeros, free values aligned with free indices)
    heap = []
    seq = itertools.count()
    heapq.heappush(heap, (root_lb, next(seq), empty, empty, root.values))
    pruned_min = np.inf
    exhausted = False

    def record():
        if trace is not None:
            lb = heap[0][0] if heap else np.inf
            trace.append((node_count, float(min(lb, pruned_min, inc_obj)), float(inc_obj)))

    record()
    while heap:
        bound, _, ones, zeros, values = heap[0]
        if bound >= inc_obj - PRUNE_TOL:
            pruned_min = min(pruned_min, bound)
            heap.clear()
            break
        if node_count >= node_budget:
            exhausted = True
            break
        heapq.heappop(heap)
        fixed = np.zeros(n, dtype=bool)
        fixed[ones] = True
        fixed[zeros] = True
        free = all_idx[~fixed]
        # branch on the free variable nearest one half, lowest index on ties
        k = int(np.argmin(np.abs(values - 0.5)))
        j = free[k]
        rest = np.delete(free, k)
        rest_vals = np.delete(values, k)

        for val in (1, 0):
            if node_count >= node_budget:
                # put the unexplored child back as part of the parent bound
                heapq.heappush(heap, (bound, next(seq), *(
                    (np.append(ones, j), zeros) if val == 1 else (ones, np.append(zeros, j))
                ), rest_vals))
                exhausted = True
                continue
            c_ones = np.sort(np.append(ones, j)) if val == 1 else ones
            c_zeros = zeros if val == 1 else np.sort(np.append(zeros, j))
            need = m - c_ones.shape[0]
            if need < 0 or need > rest.shape[0]:
                continue
            node_count += 1
            if need == 0 or need == rest.shape[0]:
                bits = np.zeros(n, dtype=np.int8)
                bits[c_ones] = 1
                if need:
                    bits[rest] = 1
                consider(bits)
                continue
            cx, cfx, clb, _, _ = relax.solve(rest, c_ones, x0=rest_vals, cutoff=inc_obj - PRUNE_TOL)
            cand = np.zeros(n, dtype=np.int8)
            cand[c_ones] = 1
            cand[rest[_top_k(cx, need).astype(bool)]] = 1
            consider(cand)
            if clb >= inc_obj - PRUNE_TOL:
                pruned_min = min(pruned_min, clb)
            else:
                heapq.heappush(heap, (clb, next(seq), c_ones, c_zeros, np.clip(cx, 0.0, 1.0)))
        record()
        if exhausted:
            break

    if exhausted and heap:
        frontier = min(item[0] for item in heap)
        res = _result(problem, inc_bits, min(frontier, pruned_min), node_count, BUDGET_EXHAUSTED, trace)
        return res
    res = _result(problem, inc_bits, min(pruned_min, inc_obj), node_count, OPTIMAL, trace)
    return res
