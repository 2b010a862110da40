"""Self-contained differentiation engine: tape-based reverse mode plus dual-number time tangents."""

from . import ops
from .dual import Dual, seed, time_tangent
from .gradcheck import GradcheckResult, grad, gradcheck, mixed_gradcheck, numerical_gradient, value_and_grad
from .tape import Tape, Variable

__all__ = [
    "Dual",
    "GradcheckResult",
    "Tape",
    "Variable",
    "grad",
    "gradcheck",
    "mixed_gradcheck",
    "numerical_gradient",
    "ops",
    "seed",
    "time_tangent",
    "value_and_grad",
]
