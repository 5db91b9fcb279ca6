"""Exact proximal operators for the top-k Huber penalty.

``prox_gstar`` evaluates prox of ``rho * TopSum_k(H_M(.))`` exactly: sort by
magnitude, give the first k sorted positions a Huber weight, solve the
resulting non-increasing isotonic problem by pool-adjacent-violators block
merging, then undo the sort and restore signs.  ``prox_g`` follows from the
extended Moreau decomposition.  Node-masked variants split coordinates into
fixed-in (elementwise Huber weight), fixed-out (identity under prox of the
conjugate, hence exactly zero under prox_g), and free (reduced budget).
"""

import numpy as np
from numba import njit

from .errors import InfeasibleNodeError, InvalidInputError

__all__ = [
    "huber",
    "huber_prox",
    "prox_gstar",
    "prox_g",
    "prox_gstar_node",
    "prox_g_node",
]


def huber(x, M):
    """Huber function: x^2/2 below the threshold M, linear with slope M above."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    out = np.where(a <= M, 0.5 * x * x, M * a - 0.5 * M * M)
    return float(out) if out.ndim == 0 else out


def huber_prox(x, w, M):
    """argmin_v (v - x)^2/2 + w * H_M(v) for nonnegative x and weight w.

    Closed form: x/(1+w) while x <= M(1+w), else x - wM; the branches meet
    continuously at x = M(1+w).
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x <= M * (1.0 + w), x / (1.0 + w), x - w * M)
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def _pava_topk_huber(xs, k, rho, M):
    """Isotonic (non-increasing) minimizer of
    sum_j (v_j - xs_j)^2/2 + rho * H_M(v_j) * [j < k]
    for xs sorted in non-increasing order.

    Classic stack-based PAVA: walk left to right, push each element as a
    singleton block, merge backward while the newer block's value strictly
    exceeds the older one's.  A merged block's value is the prox of its mean
    magnitude under the averaged Huber weight; each element is pushed once
    and merged at most once, so the sweep is linear.
    """
    p = xs.shape[0]
    out = np.empty(p)
    # per-block accumulators: weight sum, magnitude sum, count, value, last index
    P = np.empty(p)
    S = np.empty(p)
    N = np.empty(p)
    V = np.empty(p)
    last = np.empty(p, np.int64)
    b = -1
    for j in range(p):
        w = rho if j < k else 0.0
        x = xs[j]
        if x <= M * (1.0 + w):
            v = x / (1.0 + w)
        else:
            v = x - w * M
        b += 1
        P[b] = w
        S[b] = x
        N[b] = 1.0
        V[b] = v
        last[b] = j
        while b > 0 and V[b] > V[b - 1]:
            P[b - 1] += P[b]
            S[b - 1] += S[b]
            N[b - 1] += N[b]
            last[b - 1] = last[b]
            b -= 1
            m = S[b] / N[b]
            wb = P[b] / N[b]
            if m <= M * (1.0 + wb):
                V[b] = m / (1.0 + wb)
            else:
                V[b] = m - wb * M
    start = 0
    for i in range(b + 1):
        stop = last[i] + 1
        for j in range(start, stop):
            out[j] = V[i]
        start = stop
    return out


def _prox_gstar_core(mu: np.ndarray, rho: float, k: int, M: float) -> np.ndarray:
    """prox of rho * TopSum_k(H_M(.)) without argument validation; accepts k = 0."""
    p = mu.shape[0]
    if k == 0 or p == 0:
        return mu.copy()
    signs = np.sign(mu)
    absmu = np.abs(mu)
    if k >= p:
        # every coordinate carries the Huber weight; decouples elementwise
        return signs * huber_prox(absmu, rho, M)
    order = np.argsort(-absmu, kind="stable")
    nu = _pava_topk_huber(absmu[order], k, rho, M)
    out = np.empty(p)
    out[order] = nu
    out *= signs
    return out


def _validated(mu, rho, k, M):
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    if mu.ndim != 1:
        raise InvalidInputError("mu must be a 1-d vector")
    if not np.all(np.isfinite(mu)):
        raise InvalidInputError("mu contains non-finite entries")
    if not (rho > 0 and np.isfinite(rho)):
        raise InvalidInputError("rho must be a positive finite real")
    if not (M > 0 and np.isfinite(M)):
        raise InvalidInputError("M must be a positive finite real")
    if not (1 <= k <= mu.shape[0]):
        raise InvalidInputError(f"k must satisfy 1 <= k <= p, got k={k}, p={mu.shape[0]}")
    return mu


def prox_gstar(mu, rho, k, M) -> np.ndarray:
    """Exact prox of rho * g* where g*(a) = TopSum_k(H_M(a)).

    Preserves the signs of mu and the non-increasing magnitude order of |mu|;
    runs in O(p log p), dominated by the sort.
    """
    mu = _validated(mu, rho, k, M)
    return _prox_gstar_core(mu, float(rho), int(k), float(M))


def prox_g(mu, rho, k, M) -> np.ndarray:
    """prox of g scaled by 1/rho, via the extended Moreau decomposition:
    prox_{g/rho}(mu) = mu - prox_{rho g*}(rho mu) / rho.

    The output lies in dom g: box |.| <= M and top-k budget sum |.| <= kM.
    """
    mu = _validated(mu, rho, k, M)
    return mu - _prox_gstar_core(rho * mu, float(rho), int(k), float(M)) / rho


def _node_index_arrays(p, free_set, fixed_one_set):
    free = np.asarray(sorted(free_set), dtype=np.int64)
    fone = np.asarray(sorted(fixed_one_set), dtype=np.int64)
    if free.size and (free[0] < 0 or free[-1] >= p):
        raise InvalidInputError("free_set index out of range")
    if fone.size and (fone[0] < 0 or fone[-1] >= p):
        raise InvalidInputError("fixed_one_set index out of range")
    if np.intersect1d(free, fone).size:
        raise InvalidInputError("free_set and fixed_one_set must be disjoint")
    return free, fone


def prox_gstar_node(mu, rho, free_set, fixed_one_set, k_remaining, M) -> np.ndarray:
    """Node-masked prox of the conjugate penalty.

    Fixed-in coordinates always carry the Huber weight (their indicator is 1,
    no top-k competition), free coordinates compete for the remaining budget,
    and fixed-out coordinates pass through unchanged.
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    if not np.all(np.isfinite(mu)):
        raise InvalidInputError("mu contains non-finite entries")
    if not (rho > 0 and np.isfinite(rho)):
        raise InvalidInputError("rho must be a positive finite real")
    if k_remaining < 0:
        raise InfeasibleNodeError(f"remaining cardinality budget is negative ({k_remaining})")
    free, fone = _node_index_arrays(mu.shape[0], free_set, fixed_one_set)
    out = mu.copy()  # fixed-out coordinates are untouched
    if fone.size:
        sub = mu[fone]
        out[fone] = np.sign(sub) * huber_prox(np.abs(sub), rho, M)
    if free.size:
        out[free] = _prox_gstar_core(mu[free], float(rho), int(min(k_remaining, free.size)), float(M))
    return out


def prox_g_node(mu, rho, free_set, fixed_one_set, k_remaining, M) -> np.ndarray:
    """Node-masked prox of g/rho via Moreau; fixed-out coordinates map to exactly 0."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    out = mu - prox_gstar_node(rho * mu, rho, free_set, fixed_one_set, k_remaining, M) / rho
    # mu - (rho*mu)/rho can leave one-ulp residue on the pass-through block;
    # the fixed-out coordinates must come back identically zero
    mask = np.ones(mu.shape[0], dtype=bool)
    both = np.asarray(sorted(set(free_set) | set(fixed_one_set)), dtype=np.int64)
    if both.size:
        mask[both] = False
    out[mask] = 0.0
    return out
