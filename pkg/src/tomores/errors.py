"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the imaging domain."""


class DegeneracyError(ArithmeticError):
    """The posterior precision (or stacked least-squares system) is singular.

    Raised for improper priors whose null space is not probed by any beam.
    ``direction`` holds the offending null-space vector when known.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class UnsupportedPriorError(ValueError):
    """The prior does not satisfy the assumptions of a closed-form limit."""


class NumericalError(ArithmeticError):
    """A covariance could not be factorized."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
