"""Problem instances and GLM loss functions.

Losses come in two grades.  Solver-grade losses (squared error, logistic,
squared hinge) have a globally Lipschitz-smooth gradient and can be handed
to the first-order relaxation solver.  Bound-grade losses (Poisson, gamma,
multinomial) only expose their convex conjugate, which is all the safe
lower-bound formula needs; the solver rejects them.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, xlogy

from .errors import InvalidInputError, NumericalError, UnsupportedOperationError

__all__ = [
    "LossKind",
    "ProblemInstance",
    "NodeState",
    "is_solver_grade",
    "loss_value",
    "loss_gradient",
    "loss_conjugate_at_neg",
    "lipschitz_constant",
]

# Relative safety margin applied to the power-iteration estimate of the top
# eigenvalue so the quadratic upper bound survives estimation error.
LIPSCHITZ_SAFETY = 1.01

_POWER_TOL = 1e-7
_POWER_MAX_ITER = 500

# Absolute slack when testing conjugate domain membership; violations beyond
# it signal a genuinely out-of-domain argument and the conjugate is +inf.
_DOMAIN_SLACK = 1e-12


class LossKind(Enum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC = "logistic"
    SQUARED_HINGE = "squared_hinge"
    POISSON = "poisson"
    GAMMA = "gamma"
    MULTINOMIAL = "multinomial"


_SOLVER_GRADE = (LossKind.SQUARED_ERROR, LossKind.LOGISTIC, LossKind.SQUARED_HINGE)
_PM_ONE_LABELS = (LossKind.LOGISTIC, LossKind.SQUARED_HINGE)


def is_solver_grade(loss: LossKind) -> bool:
    return loss in _SOLVER_GRADE


def _check_labels(loss: LossKind, y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("labels contain non-finite entries")
    if loss in _PM_ONE_LABELS:
        if not np.all(np.abs(y) == 1.0):
            raise InvalidInputError(f"{loss.value} labels must be +/-1")
    elif loss is LossKind.GAMMA:
        if not np.all(y > 0):
            raise InvalidInputError("gamma labels must be positive")
    elif loss is LossKind.MULTINOMIAL:
        if y.ndim != 2:
            raise InvalidInputError("multinomial labels must be an (n, K) indicator matrix")
        if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
            raise InvalidInputError("multinomial labels must be one-hot rows")


@dataclass
class ProblemInstance:
    """A cardinality-constrained, box-constrained ridge-regularized GLM fit.

    Minimize ``f(X beta, y) + lambda2 * ||beta||_2^2`` subject to
    ``||beta||_0 <= k`` and ``||beta||_inf <= M``.
    """

    X: np.ndarray
    y: np.ndarray
    loss: LossKind
    k: int
    M: float
    lambda2: float
    beta_true: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise InvalidInputError("X must be a 2-d matrix")
        n, p = self.X.shape
        rows = self.y.shape[0]
        if rows != n:
            raise InvalidInputError(f"X has {n} rows but y has {rows} entries")
        if not np.all(np.isfinite(self.X)):
            raise InvalidInputError("X contains non-finite entries")
        if not (1 <= self.k <= p):
            raise InvalidInputError(f"k must satisfy 1 <= k <= p, got k={self.k}, p={p}")
        if not (self.M > 0 and np.isfinite(self.M)):
            raise InvalidInputError("M must be a positive finite real")
        if not (self.lambda2 > 0 and np.isfinite(self.lambda2)):
            raise InvalidInputError("lambda2 must be a positive finite real")
        _check_labels(self.loss, self.y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class NodeState:
    """Search-tree node: indicator variables already fixed, plus bookkeeping.

    ``fixed_one`` holds features whose indicator is forced to 1 (always in
    the support), ``fixed_zero`` features forced out.  ``parent_bound`` is a
    valid lower bound on every solution in the node's subtree, inherited from
    the parent node.  ``warm_start`` seeds the node's relaxation solve.
    """

    fixed_one: Tuple[int, ...] = ()
    fixed_zero: Tuple[int, ...] = ()
    depth: int = 0
    parent_bound: float = -np.inf
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        self.fixed_one = tuple(sorted(int(j) for j in self.fixed_one))
        self.fixed_zero = tuple(sorted(int(j) for j in self.fixed_zero))
        if set(self.fixed_one) & set(self.fixed_zero):
            raise InvalidInputError("fixed_one and fixed_zero must be disjoint")

    def free_indices(self, p: int) -> np.ndarray:
        mask = np.ones(p, dtype=bool)
        idx = np.fromiter(self.fixed_one + self.fixed_zero, dtype=np.int64, count=len(self.fixed_one) + len(self.fixed_zero))
        if idx.size:
            mask[idx] = False
        return np.nonzero(mask)[0]

    def is_trivial(self) -> bool:
        return not self.fixed_one and not self.fixed_zero


def _as_finite_vector(u, name):
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return u


def loss_value(loss: LossKind, u, y) -> float:
    """Evaluate the data-fit term F(u) at linear predictions u."""
    u = _as_finite_vector(u, "u")
    y = np.asarray(y, dtype=np.float64)
    _check_labels(loss, y)
    if loss is LossKind.SQUARED_ERROR:
        d = u - y
        return float(d @ d)
    if loss is LossKind.LOGISTIC:
        # log(1 + exp(t)) as max(t, 0) + log1p(exp(-|t|)), overflow-safe
        return float(np.sum(np.logaddexp(0.0, -y * u)))
    if loss is LossKind.SQUARED_HINGE:
        m = np.maximum(0.0, 1.0 - y * u)
        return float(m @ m)
    if loss is LossKind.POISSON:
        return float(np.sum(np.exp(u) - y * u))
    if loss is LossKind.GAMMA:
        return float(np.sum(y * np.exp(-u) + u))
    if loss is LossKind.MULTINOMIAL:
        U = np.atleast_2d(u)
        lse = np.logaddexp.reduce(U, axis=1)
        return float(np.sum(lse) - np.sum(y * U))
    raise InvalidInputError(f"unknown loss {loss!r}")


def _gradient_any(loss: LossKind, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of F at u for every loss, including bound-grade ones.

    Bound-grade losses lack a global Lipschitz constant, not a gradient;
    the dual certificate zeta = -grad F(X beta) needs this for all of them.
    """
    if loss is LossKind.SQUARED_ERROR:
        return 2.0 * (u - y)
    if loss is LossKind.LOGISTIC:
        return -y * expit(-y * u)
    if loss is LossKind.SQUARED_HINGE:
        return -2.0 * y * np.maximum(0.0, 1.0 - y * u)
    if loss is LossKind.POISSON:
        return np.exp(u) - y
    if loss is LossKind.GAMMA:
        return 1.0 - y * np.exp(-u)
    if loss is LossKind.MULTINOMIAL:
        U = np.atleast_2d(u)
        Z = U - U.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True) - y
    raise InvalidInputError(f"unknown loss {loss!r}")


def loss_gradient(loss: LossKind, u, y) -> np.ndarray:
    """Gradient of F at u.  Restricted to solver-grade losses."""
    if not is_solver_grade(loss):
        raise UnsupportedOperationError(
            f"{loss.value} is bound-grade: gradients are not exposed because no "
            "global Lipschitz constant exists for the solver to rely on"
        )
    u = _as_finite_vector(u, "u")
    y = np.asarray(y, dtype=np.float64)
    _check_labels(loss, y)
    return _gradient_any(loss, u, y)


def _entropy_pair(r: np.ndarray) -> float:
    # sum of r log r + (1-r) log(1-r) with 0 log 0 = 0
    return float(np.sum(xlogy(r, r) + xlogy(1.0 - r, 1.0 - r)))


def loss_conjugate_at_neg(loss: LossKind, zeta, y) -> float:
    """Evaluate F*(-zeta).  Out-of-domain arguments give +inf, never an error.

    The +inf convention keeps downstream bound formulas safe: an infinite
    conjugate turns the Fenchel lower bound into -inf, which is vacuous but
    never invalid.
    """
    zeta = np.asarray(zeta, dtype=np.float64)
    if np.any(np.isnan(zeta)):
        raise InvalidInputError("zeta contains NaN entries")
    y = np.asarray(y, dtype=np.float64)
    _check_labels(loss, y)

    if loss is LossKind.SQUARED_ERROR:
        return float(0.25 * (zeta @ zeta) - y @ zeta)

    if loss is LossKind.LOGISTIC:
        r = zeta / y
        if np.any(r < -_DOMAIN_SLACK) or np.any(r > 1.0 + _DOMAIN_SLACK):
            return np.inf
        return _entropy_pair(np.clip(r, 0.0, 1.0))

    if loss is LossKind.SQUARED_HINGE:
        z = -y * zeta
        if np.any(z > _DOMAIN_SLACK):
            return np.inf
        z = np.minimum(z, 0.0)
        return float(np.sum(z + 0.25 * z * z))

    if loss is LossKind.POISSON:
        z = y - zeta
        if np.any(z < -_DOMAIN_SLACK):
            return np.inf
        z = np.maximum(z, 0.0)
        return float(np.sum(xlogy(z, z) - z))

    if loss is LossKind.GAMMA:
        # F(u) = sum y exp(-u) + u has F*(w) = sum y h((1 - w)/y) with
        # h(z) = z log z - z; at w = -zeta the argument is (1 + zeta)/y.
        z = (1.0 + zeta) / y
        if np.any(z < -_DOMAIN_SLACK):
            return np.inf
        z = np.maximum(z, 0.0)
        return float(np.sum(y * (xlogy(z, z) - z)))

    if loss is LossKind.MULTINOMIAL:
        Z = y - np.atleast_2d(zeta)
        if np.any(Z < -_DOMAIN_SLACK):
            return np.inf
        if np.any(np.abs(Z.sum(axis=1) - 1.0) > 1e-9):
            return np.inf
        Z = np.maximum(Z, 0.0)
        return float(np.sum(xlogy(Z, Z)))

    raise InvalidInputError(f"unknown loss {loss!r}")


def _power_iteration_lambda_max(X: np.ndarray, tol=_POWER_TOL, max_iter=_POWER_MAX_ITER, seed=0) -> float:
    """Top eigenvalue of X^T X by power iteration on a fixed-seed start."""
    p = X.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for it in range(max_iter):
        w = X @ v
        lam = float(w @ w)  # Rayleigh quotient v^T X^T X v for unit v
        if lam == 0.0:
            return 0.0
        v = X.T @ w
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        v /= nrm
        if abs(lam - lam_prev) <= tol * lam:
            return lam
        lam_prev = lam
    raise NumericalError(
        f"power iteration did not converge within {max_iter} iterations",
        iteration=max_iter,
    )


_CURVATURE = {
    LossKind.SQUARED_ERROR: 2.0,
    LossKind.LOGISTIC: 0.25,
    LossKind.SQUARED_HINGE: 2.0,
}


def lipschitz_constant(instance: ProblemInstance) -> float:
    """Upper bound on the Lipschitz constant of grad_beta f(X beta, y).

    The per-sample curvature cap of the loss times lambda_max(X^T X), the
    latter estimated by power iteration and inflated by a 1% safety factor.
    """
    if not is_solver_grade(instance.loss):
        raise UnsupportedOperationError(
            f"{instance.loss.value} has no global gradient Lipschitz constant"
        )
    lam = _power_iteration_lambda_max(instance.X)
    return _CURVATURE[instance.loss] * lam * LIPSCHITZ_SAFETY
