"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ShapeError(ValueError):
    """Array shape does not match what an operator expects."""


class UnsupportedError(NotImplementedError):
    """The requested operation is not available for this schedule or operator."""


class DivergenceError(FloatingPointError):
    """A sampling iterate became non-finite."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite iterate at step {step}")


class PinvWarning(RuntimeWarning):
    """The pseudo-inverse solver stopped before reaching its tolerance."""


class DampingWarning(RuntimeWarning):
    """A near-singular covariance had to be regularized."""
