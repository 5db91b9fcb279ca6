"""The perspective envelope g, its conjugate, and safe Fenchel lower bounds.

g(beta) is the value of minimizing (1/2) sum beta_j^2 / z_j over indicator
relaxations z in [0,1]^p with sum z <= k and |beta_j| <= M z_j.  Finite
values are computed by a greedy suffix-averaging pass over the top-k
magnitudes; infeasible beta get +inf.  The conjugate is the top-k sum of
Huber values.  Both come in node-restricted flavors for search-tree use.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InfeasibleNodeError, InvalidInputError, UnsupportedOperationError
from .model import LossKind, NodeState, ProblemInstance, _gradient_any, loss_conjugate_at_neg
from .prox import huber

__all__ = ["EnvelopeParams", "g_value", "g_conjugate", "safe_lower_bound"]

# Relative slack on the box and budget feasibility checks, absorbing the
# round-off of prox outputs that sit exactly on the domain boundary.
_FEAS_RTOL = 1e-9
# Fixed-out coordinates must be this close to zero (absolute) to count as zero.
_ZERO_ATOL = 1e-9


@dataclass(frozen=True)
class EnvelopeParams:
    """Budget k and box bound M, optionally restricted to a search node."""

    k: int
    M: float
    fixed_one: Tuple[int, ...] = ()
    fixed_zero: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.k < 0:
            raise InvalidInputError("k must be nonnegative")
        if not (self.M > 0 and np.isfinite(self.M)):
            raise InvalidInputError("M must be a positive finite real")
        if set(self.fixed_one) & set(self.fixed_zero):
            raise InvalidInputError("fixed_one and fixed_zero must be disjoint")
        if self.k_remaining < 0:
            raise InfeasibleNodeError(
                f"|fixed_one| = {len(self.fixed_one)} exceeds the budget k = {self.k}"
            )

    @property
    def k_remaining(self) -> int:
        return self.k - len(self.fixed_one)

    @property
    def restricted(self) -> bool:
        return bool(self.fixed_one or self.fixed_zero)

    @classmethod
    def for_instance(cls, instance: ProblemInstance, node: Optional[NodeState] = None) -> "EnvelopeParams":
        if node is None:
            return cls(k=instance.k, M=instance.M)
        return cls(
            k=instance.k,
            M=instance.M,
            fixed_one=node.fixed_one,
            fixed_zero=node.fixed_zero,
        )

    def free_indices(self, p: int) -> np.ndarray:
        mask = np.ones(p, dtype=bool)
        fixed = np.asarray(self.fixed_one + self.fixed_zero, dtype=np.int64)
        if fixed.size:
            mask[fixed] = False
        return np.nonzero(mask)[0]


def _g_value_free(absb: np.ndarray, k: int, M: float) -> float:
    """Envelope value over unrestricted coordinates, +inf when infeasible.

    Feasibility is the tightest-z test: |beta_j| <= M for every j and
    sum |beta_j| <= kM.  Finite values come from the majorization greedy:
    walk the top-k magnitudes, committing each one while it exceeds the
    running average of the mass still to place, then flatten the rest.
    """
    p = absb.shape[0]
    if p == 0:
        return 0.0
    total = float(absb.sum())
    amax = float(absb.max())
    if amax > M * (1.0 + _FEAS_RTOL):
        return np.inf
    if total > k * M * (1.0 + _FEAS_RTOL):
        return np.inf
    if k == 0:
        return 0.0
    if k >= p:
        top = np.sort(absb)[::-1]
        kk = p
    else:
        top = np.partition(absb, p - k)[p - k:]
        top = np.sort(top)[::-1]
        kk = k
    prefix = np.concatenate(([0.0], np.cumsum(top[:-1])))
    remaining = total - prefix            # mass left to place at step j
    slots = kk - np.arange(kk)            # slots left at step j
    avg = remaining / slots
    stop = np.nonzero(avg >= top)[0]
    # the last step satisfies avg >= top in exact arithmetic; summation
    # round-off can miss it by an ulp, so fall back explicitly
    j = int(stop[0]) if stop.size else kk - 1
    head = top[:j]
    return float(0.5 * (head @ head + slots[j] * avg[j] * avg[j]))


def g_value(beta, params: EnvelopeParams) -> float:
    """Exact envelope value g(beta); +inf signals infeasibility, not an error."""
    beta = np.asarray(beta, dtype=np.float64)
    if not params.restricted:
        return _g_value_free(np.abs(beta), params.k, params.M)
    value = 0.0
    if params.fixed_zero:
        fz = np.asarray(params.fixed_zero, dtype=np.int64)
        if np.any(np.abs(beta[fz]) > _ZERO_ATOL):
            return np.inf
    if params.fixed_one:
        fo = np.asarray(params.fixed_one, dtype=np.int64)
        sub = beta[fo]
        if np.any(np.abs(sub) > params.M * (1.0 + _FEAS_RTOL)):
            return np.inf
        value += 0.5 * float(sub @ sub)  # indicator pinned at 1
    free = params.free_indices(beta.shape[0])
    value_free = _g_value_free(np.abs(beta[free]), params.k_remaining, params.M)
    return value + value_free


def _topsum(values: np.ndarray, k: int) -> float:
    if k <= 0 or values.size == 0:
        return 0.0
    if k >= values.size:
        return float(values.sum())
    return float(np.partition(values, values.size - k)[values.size - k:].sum())


def g_conjugate(alpha, params: EnvelopeParams) -> float:
    """Conjugate of the envelope: the sum of the k largest Huber values.

    Under a node restriction, fixed-in coordinates contribute their Huber
    value unconditionally, free ones compete for the remaining budget, and
    fixed-out ones are ignored.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    H = huber(alpha, params.M)
    if not params.restricted:
        return _topsum(H, params.k)
    total = 0.0
    if params.fixed_one:
        total += float(H[np.asarray(params.fixed_one, dtype=np.int64)].sum())
    free = params.free_indices(alpha.shape[0])
    total += _topsum(H[free], params.k_remaining)
    return total


def safe_lower_bound(
    instance: ProblemInstance,
    beta_hat,
    node: Optional[NodeState] = None,
) -> float:
    """Weak-duality lower bound on the (node-restricted) MIP optimum.

    Valid for any finite beta_hat and tight as beta_hat approaches the
    relaxation optimizer: with zeta = -grad F(X beta_hat), the bound is
    -F*(-zeta) - G*(X^T zeta) where G = 2 lambda2 g and the conjugate
    scaling follows G*(v) = 2 lambda2 g*(v / (2 lambda2)).
    """
    if instance.loss is LossKind.MULTINOMIAL:
        # multinomial coefficients are p x K matrices; this artifact models
        # vector coefficients only, so just the conjugate is exposed
        raise UnsupportedOperationError("multinomial instances have no vector-coefficient bound")
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    if not np.all(np.isfinite(beta_hat)):
        raise InvalidInputError("beta_hat contains non-finite entries")
    params = EnvelopeParams.for_instance(instance, node)
    u = instance.X @ beta_hat
    zeta = -_gradient_any(instance.loss, u, instance.y)
    fstar = loss_conjugate_at_neg(instance.loss, zeta, instance.y)
    if not np.isfinite(fstar):
        return -np.inf
    v = instance.X.T @ zeta
    two_l2 = 2.0 * instance.lambda2
    gstar = g_conjugate(v / two_l2, params)
    return float(-fstar - two_l2 * gstar)
