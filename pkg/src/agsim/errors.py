"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """An input is outside the geometric or physical domain of an operation."""


class ConfigurationError(ValueError):
    """A run or scenario configuration is invalid or infeasible."""


class SingularMatrixError(ValueError):
    """A matrix required to be invertible is rank deficient or too ill-conditioned."""
