"""Exception hierarchy shared across the package.

Each class carries an ``exit_code`` so the command line front end can map a
failure category onto a process status without string matching.
"""


class SwimRheoError(Exception):
    exit_code = 1


class ConfigError(SwimRheoError):
    """Invalid or unreadable configuration. ``key`` names the offending entry."""

    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ParameterRangeError(ConfigError, ValueError):
    exit_code = 3


class ResolutionError(SwimRheoError, ValueError):
    """Grid too coarse for the requested band limit."""

    exit_code = 4


class SymmetryError(SwimRheoError):
    """Harmonic coefficients violate the realness (conjugate) symmetry."""

    exit_code = 5


class UndefinedFrequencyError(SwimRheoError, ZeroDivisionError):
    """A Fourier kernel was evaluated at k = 0."""

    exit_code = 4


class ShearRequiredError(SwimRheoError, ZeroDivisionError):
    """Quantity requires a nonzero shear rate."""

    exit_code = 3


class ParameterRegimeError(SwimRheoError, ValueError):
    """Parameters fall outside the regime where a formula is defined."""

    exit_code = 3


class StepSizeError(SwimRheoError, RuntimeError):
    exit_code = 6


class InstabilityError(SwimRheoError, RuntimeError):
    exit_code = 6


class AccuracyError(SwimRheoError, RuntimeError):
    """A quadrature failed its own convergence check."""

    exit_code = 7


class ContractViolation(SwimRheoError, ValueError):
    exit_code = 8
