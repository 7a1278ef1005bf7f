"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (config -> 2, data -> 3,
identifiability -> 4), so raise the most specific class available.
"""


class TecausalError(Exception):
    """Base class for all package errors."""


class ConfigError(TecausalError):
    """Invalid configuration or parameter values."""


class InfiniteMomentError(ConfigError):
    """Requested a moment that does not exist for the given degrees of freedom."""


class DataError(TecausalError):
    """Malformed, non-finite, or inconsistent input data."""


class ConditioningError(DataError):
    """A covariance matrix could not be inverted; suggest a ridge."""


class AcyclicityError(DataError):
    """The adjacency support contains a directed cycle."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"adjacency support contains a cycle: {self.cycle}")


class IdentifiabilityError(TecausalError):
    """Rank-deficient aggregate information; the window is too short."""


class DegenerateUnmixingError(IdentifiabilityError):
    """No row assignment of the unmixing matrix avoids a zero diagonal."""


class MetricError(TecausalError):
    """A structure-recovery metric is undefined for the given inputs."""


class CrowdingWarning(UserWarning):
    """Consecutive eigenvalues closer than the tolerance; recovery is unstable."""
