class VerificationError(RuntimeError):
    """A numerically checked structural claim did not hold."""


class CapExceededError(ValueError):
    """Full simulation would exceed the configured state-dimension cap."""


class InfeasibleTargetError(ValueError):
    """The requested discrimination target cannot be met."""
