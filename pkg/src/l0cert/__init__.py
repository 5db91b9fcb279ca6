"""Certifiably optimal k-sparse GLMs.

Solves cardinality- and box-constrained ridge-regularized GLM fits to
certified optimality: a restarted accelerated proximal-gradient method on
the perspective relaxation (with an exact log-linear prox via block
merging), safe Fenchel dual bounds, and a branch-and-bound loop around
them.
"""

from .errors import (
    DataFormatError,
    InfeasibleNodeError,
    InvalidInputError,
    L0CertError,
    NumericalError,
    UnsupportedOperationError,
)
from .model import (
    LossKind,
    NodeState,
    ProblemInstance,
    is_solver_grade,
    lipschitz_constant,
    loss_conjugate_at_neg,
    loss_gradient,
    loss_value,
)
from .perspective import EnvelopeParams, g_conjugate, g_value, safe_lower_bound
from .prox import huber, huber_prox, prox_g, prox_g_node, prox_gstar, prox_gstar_node

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "EnvelopeParams",
    "InfeasibleNodeError",
    "InvalidInputError",
    "L0CertError",
    "LossKind",
    "NodeState",
    "NumericalError",
    "ProblemInstance",
    "UnsupportedOperationError",
    "__version__",
    "g_conjugate",
    "g_value",
    "huber",
    "huber_prox",
    "is_solver_grade",
    "lipschitz_constant",
    "loss_conjugate_at_neg",
    "loss_gradient",
    "loss_value",
    "prox_g",
    "prox_g_node",
    "prox_gstar",
    "prox_gstar_node",
    "safe_lower_bound",
]
