"""Optimal posture selection for calibration.

A posture's information matrix is J_b^T J_b with J_b its residual Jacobian in
base coordinates; information is additive over postures.  Quality of a set of
k postures is the observability index

    O1 = det(sum I_B)^(1 / (2 N_b)) / sqrt(k),

the determinant route normalized so that duplicating a posture pool leaves the
index unchanged.  Selection happens in two stages: a multiplicative-update
ascent of the concave log-det objective over continuous simplex weights, then
a scan of the weight-ranked prefixes that stops at the first non-increase of
O1.  DETMAX exchange and uniform random selection serve as baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError
from .residual import ParameterVector, posture_jacobian

_REG_EPS = 1e-12


def info_matrix(chain, plane, base, q, params=None):
    """Information matrix of one posture in base coordinates."""
    if params is None:
        params = ParameterVector.zeros(chain, mask=base.mask)
    j = posture_jacobian(chain, plane, q, params, base.global_independent)
    return j.T @ j


def pool_info_matrices(chain, plane, base, postures, params=None):
    """Stacked (N, N_b, N_b) information matrices for a posture pool."""
    postures = np.asarray(postures, dtype=float)
    out = np.empty((postures.shape[0], base.n_b, base.n_b))
    for i in range(postures.shape[0]):
        out[i] = info_matrix(chain, plane, base, postures[i], params)
    return out


def _as_info_stack(infos):
    a = np.asarray(infos, dtype=float)
    if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[0] == 0:
        raise InvalidArgumentError("infos must be a non-empty (N, N_b, N_b) stack")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("non-finite information matrices")
    return a


def _o1_of_sum(m_sum, k):
    """O1 from an accumulated information sum; 0.0 when not positive definite."""
    try:
        chol = np.linalg.cholesky(m_sum)
    except np.linalg.LinAlgError:
        return 0.0
    d = np.diag(chol)
    if np.any(d <= 0.0):
        return 0.0
    n_b = m_sum.shape[0]
    return float(math.exp(np.sum(np.log(d)) / n_b) / math.sqrt(k))


def o1_index(infos, k=None):
    """Observability index of a set of information matrices.

    `k` defaults to the number of matrices; pass it explicitly when the sum
    was formed elsewhere.  Returns 0.0 for a singular information sum.
    """
    a = _as_info_stack(infos)
    return _o1_of_sum(a.sum(axis=0), a.shape[0] if k is None else int(k))


@dataclass(frozen=True, eq=False)
class WeightOptimResult:
    weights: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    regularized: bool


def optimize_weights(infos, seed=0, max_iterations=10000, rel_tol=1e-9):
    """Maximize log det of the weighted information sum over simplex weights.

    Multiplicative update w_i <- w_i * tr(M^-1 I_i) / N_b, a standard ascent
    for this concave objective; the simplex is preserved by construction and
    renormalized against drift.  Stops when the largest weight change falls
    below `rel_tol` of the largest weight (off-support weights decay forever,
    so per-weight relative change would never settle), on an update that no
    longer improves the objective numerically, or after `max_iterations`.  A
    singular weighted sum is ridge-regularized and flagged.

    The hot loop works on the packed upper triangles of the symmetric
    matrices, off-diagonal entries doubled, so tr(M^-1 I_i) is a plain inner
    product; both matrix-vector products are laid out for the transposed BLAS
    path, which is several times faster than the plain one here.
    """
    infos = _as_info_stack(infos)
    n, n_b = infos.shape[0], infos.shape[1]
    iu = np.triu_indices(n_b)
    flat_iu = iu[0] * n_b + iu[1]
    pack_mult = np.where(iu[0] == iu[1], 1.0, 2.0)
    packed = infos[:, iu[0], iu[1]] * pack_mult
    packed_t = np.ascontiguousarray(packed.T)
    unpack_mult = 1.0 / pack_mult
    eye = np.eye(n_b)
    potrf, potri = scipy.linalg.get_lapack_funcs(("potrf", "potri"), (eye,))

    def upper_sum(wv):
        # only the upper triangle is referenced by the factorization below
        m = np.zeros((n_b, n_b))
        m[iu[0], iu[1]] = (packed.T @ wv) * unpack_mult
        return m

    def factor(m):
        """Upper-Cholesky log-det and inverse; ridge fallback when not PD."""
        c, info = potrf(m, lower=0)
        reg = False
        if info != 0:
            m = m + _REG_EPS * eye
            reg = True
            c, info = potrf(m, lower=0)
            if info != 0:
                return None, -np.inf, True
        logdet = 2.0 * np.sum(np.log(np.diag(c)))
        inv_u, info = potri(c, lower=0)
        if info != 0:
            return None, -np.inf, True
        return inv_u, logdet, reg

    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, n)
    w /= w.sum()
    inv_u, obj, regularized = factor(upper_sum(w))
    trace = [obj]
    iterations = 0
    if inv_u is None:
        m = upper_sum(w)
        inv_u = np.linalg.pinv(m + np.triu(m, 1).T)
    for _ in range(max_iterations):
        # tr(M^-1 I_i) as one inner product per posture; both factors
        # symmetric, and potri filled exactly the triangle taken here
        w_new = w * (packed_t.T @ (inv_u.take(flat_iu) / n_b))
        total = w_new.sum()
        if total <= 0.0 or not np.isfinite(total):
            regularized = True
            break
        w_new /= total
        # off-support weights decay geometrically into subnormal range and
        # stall the BLAS kernels; flooring them to zero is exact at double
        # precision for the objective (mass removed is ~1e-250).  The floor
        # also swallows any tiny negative ratio from rounding.
        w_new[w_new < 1e-250] = 0.0
        inv_new, obj_new, reg = factor(upper_sum(w_new))
        regularized = regularized or reg
        if inv_new is None or obj_new < obj:
            break  # ascent exhausted at numerical precision
        change = np.max(np.abs(w_new - w))
        scale = np.max(w_new)
        w, inv_u, obj = w_new, inv_new, obj_new
        trace.append(obj)
        iterations += 1
        if change < rel_tol * scale or change < 1e-16:
            break
    return WeightOptimResult(
        weights=w,
        objective_trace=np.array(trace),
        iterations=iterations,
        regularized=regularized,
    )


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Outcome of a selection strategy over a posture pool."""

    method: str
    ranked_ids: np.ndarray
    selected_ids: np.ndarray
    k_star: int
    o1_curve: np.ndarray  # rows (k, O1)
    o1_at_k_star: float
    weights: np.ndarray = None
    objective_trace: np.ndarray = None
    flags: tuple = ()


def default_k0(n_b):
    return math.ceil(n_b / 3)


def iroc_select(infos, k_0=None, seed=0, ids=None, smoothed=False, max_iterations=10000):
    """Rank postures by optimized weight and keep the prefix where O1 peaks.

    Weights are optimized over the whole pool, sorted descending (ties broken
    by ascending posture id), and prefixes are scanned from k_0 (default
    ceil(N_b / 3)).  The scan accepts k_0 unconditionally, grows past singular
    prefixes (flagged), and stops at the first k with O1(k) - O1(k-1) <= 0,
    returning k_star = k - 1.  `smoothed` requires two consecutive
    non-increases before stopping.
    """
    infos = _as_info_stack(infos)
    n, n_b = infos.shape[0], infos.shape[1]
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=int)
    if ids.shape != (n,):
        raise InvalidArgumentError("ids must match the pool size")
    k0 = default_k0(n_b) if k_0 is None else int(k_0)
    if not 1 <= k0 <= n:
        raise InvalidArgumentError(f"k_0={k0} outside 1..{n}")
    opt = optimize_weights(infos, seed=seed, max_iterations=max_iterations)
    order = np.lexsort((ids, -opt.weights))
    ranked = ids[order]
    flags = list(("regularized",) if opt.regularized else ())

    m_sum = infos[order[:k0]].sum(axis=0)
    o1_prev = _o1_of_sum(m_sum, k0)
    curve = [(k0, o1_prev)]
    if o1_prev == 0.0:
        flags.append("grew_k0")
    needed = 2 if smoothed else 1
    nonincrease = 0
    k_star = n
    for k in range(k0 + 1, n + 1):
        m_sum = m_sum + infos[order[k - 1]]
        o1_k = _o1_of_sum(m_sum, k)
        curve.append((k, o1_k))
        if o1_prev > 0.0 and o1_k - o1_prev <= 0.0:
            nonincrease += 1
            if nonincrease >= needed:
                k_star = k - needed
                break
        else:
            nonincrease = 0
        o1_prev = o1_k
    else:
        flags.append("no_plateau")
    curve = np.array(curve)
    o1_star = float(curve[curve[:, 0] == k_star, 1][0])
    if o1_star == 0.0:
        flags.append("singular_selection")
    return SelectionResult(
        method="iroc",
        ranked_ids=ranked,
        selected_ids=ranked[:k_star],
        k_star=int(k_star),
        o1_curve=curve,
        o1_at_k_star=o1_star,
        weights=opt.weights,
        objective_trace=opt.objective_trace,
        flags=tuple(flags),
    )


@dataclass(frozen=True, eq=False)
class DetmaxRun:
    run: int
    selected_ids: np.ndarray
    o1: float
    trace: np.ndarray


def detmax_select(infos, m, n_runs=10, seed=0, ids=None, max_rounds=100):
    """Best-of-`n_runs` DETMAX exchange search for a fixed-size subset.

    Each run starts from a random m-subset and alternates an add-best with a
    remove-best exchange, stopping when the exchange returns to an already
    visited subset (or removes the posture it just added) or after
    `max_rounds`.  Ties go to the lower posture index for determinism.
    """
    infos = _as_info_stack(infos)
    n = infos.shape[0]
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=int)
    if ids.shape != (n,):
        raise InvalidArgumentError("ids must match the pool size")
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"subset size m={m} outside 1..{n}")
    if n_runs < 1:
        raise InvalidArgumentError("n_runs must be at least 1")

    if m == n:
        sel = np.sort(ids)
        o1 = _o1_of_sum(infos.sum(axis=0), n)
        result = SelectionResult(
            method="detmax",
            ranked_ids=sel,
            selected_ids=sel,
            k_star=m,
            o1_curve=np.array([[m, o1]]),
            o1_at_k_star=o1,
            flags=("full_pool",),
        )
        return result, [DetmaxRun(0, sel, o1, np.array([o1]))]

    runs = []
    for run in range(n_runs):
        rng = np.random.default_rng((seed, run))
        subset = set(int(v) for v in rng.choice(n, size=m, replace=False))
        m_sum = infos[sorted(subset)].sum(axis=0)
        seen = {frozenset(subset)}
        trace = [_o1_of_sum(m_sum, m)]
        for _ in range(max_rounds):
            best_add, best_val = -1, -np.inf
            for cand in range(n):
                if cand in subset:
                    continue
                val = _o1_of_sum(m_sum + infos[cand], m + 1)
                if val > best_val:
                    best_add, best_val = cand, val
            subset.add(best_add)
            m_sum = m_sum + infos[best_add]
            best_rm, best_val = -1, -np.inf
            for cand in sorted(subset):
                val = _o1_of_sum(m_sum - infos[cand], m)
                if val > best_val:
                    best_rm, best_val = cand, val
            subset.discard(best_rm)
            m_sum = m_sum - infos[best_rm]
            trace.append(_o1_of_sum(m_sum, m))
            if best_rm == best_add or frozenset(subset) in seen:
                break
            seen.add(frozenset(subset))
        local = np.sort(np.fromiter(subset, dtype=int))
        runs.append(
            DetmaxRun(
                run=run,
                selected_ids=ids[local],
                o1=float(_o1_of_sum(infos[local].sum(axis=0), m)),
                trace=np.array(trace),
            )
        )
    best = max(runs, key=lambda r: (r.o1, -r.run))
    result = SelectionResult(
        method="detmax",
        ranked_ids=best.selected_ids,
        selected_ids=best.selected_ids,
        k_star=int(m),
        o1_curve=np.array([[m, best.o1]]),
        o1_at_k_star=best.o1,
        flags=(),
    )
    return result, runs


def random_select(infos, m, seed=0, ids=None):
    """Uniform random m-subset; the weakest baseline."""
    infos = _as_info_stack(infos)
    n = infos.shape[0]
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=int)
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"subset size m={m} outside 1..{n}")
    rng = np.random.default_rng(seed)
    local = np.sort(rng.choice(n, size=m, replace=False))
    o1 = _o1_of_sum(infos[local].sum(axis=0), m)
    return SelectionResult(
        method="random",
        ranked_ids=ids[local],
        selected_ids=ids[local],
        k_star=int(m),
        o1_curve=np.array([[m, o1]]),
        o1_at_k_star=float(o1),
    )
