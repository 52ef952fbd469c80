"""Interaction-free measurement laboratory."""

__version__ = "0.1.0"

from .errors import CapExceededError, InfeasibleTargetError, VerificationError
from .kernels import backend, use_backend

__all__ = [
    "CapExceededError",
    "InfeasibleTargetError",
    "VerificationError",
    "backend",
    "use_backend",
    "__version__",
]
