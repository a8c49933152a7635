"""Exception hierarchy shared by the design, simulation and CLI layers."""


class ObserverError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ObserverError, ValueError):
    """Non-finite entries, asymmetric/indefinite weights and similar."""


class DimensionError(InvalidInputError):
    """Matrix or vector shapes are inconsistent."""


class InfeasibleDesignError(ObserverError):
    """A requested observer cannot be built for this plant.

    ``report`` carries whatever diagnostics were collected before giving up
    (a :class:`~cubic_observer.design.DesignReport` or a plain dict).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DesignRejectedError(InfeasibleDesignError):
    """A design was constructed but its residual exceeds the acceptance tolerance."""

    def __init__(self, message, residual, report=None):
        super().__init__(message, report)
        self.residual = residual


class DelayDesignInfeasibleError(InfeasibleDesignError):
    """No delayed-output gain J_i reproduces (I - EC) A_i for delay ``index``."""

    def __init__(self, message, index, residual, report=None):
        super().__init__(message, report)
        self.index = index
        self.residual = residual


class DivergenceError(ObserverError):
    """The integrated state became non-finite at ``time``."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class ConfigError(ObserverError, ValueError):
    """Run configuration failed schema or dimension validation."""
