"""Exception types shared across the package."""


class QuickdetError(Exception):
    """Base class for all package errors."""


class DegenerateLikelihoodError(QuickdetError):
    """Every state likelihood vanished at an observation.

    Indicates the observation lies outside the measurement model's
    support; the filter cannot renormalize.
    """

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class CapExceededError(QuickdetError):
    """Exact path enumeration was asked for a sequence above the cap."""


class EmptyTrialSetError(QuickdetError):
    """Cost evaluation needs at least one trial with a stopping time."""


class QuadratureFailureError(QuickdetError):
    """Quadrature weights fail to integrate the predictive density to 1."""


class NotConvergedError(QuickdetError):
    """Value iteration hit the iteration cap before reaching tolerance."""

    def __init__(self, message, residual, value_function=None):
        super().__init__(message)
        self.residual = residual
        self.value_function = value_function


class NotAnIntervalError(QuickdetError):
    """The grid stopping region is not an up-set; discretization failed."""


class InvalidPatchError(QuickdetError):
    """Motion patch probabilities do not form a distribution."""


class ScheduleOutOfBoundsError(QuickdetError):
    """Synthetic emergence schedule is inconsistent with the grid."""


class ConfigError(QuickdetError):
    """A config file failed validation; carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
