"""Shared constants and error types for the processor-sharing sojourn tooling."""

__version__ = "0.1.0"

DEFAULT_SUITES_FILENAME = "config/validation-suites.yaml"
THREADS_ENV_VAR = "PS_SOJOURN_THREADS"
SIG_DIGITS = 17


class SojournError(Exception):
    """Base class for every error raised by the library."""


class DomainError(SojournError, ValueError):
    """Argument lies left of the analyticity abscissa or outside a parameter range."""


class UnsupportedError(SojournError, ValueError):
    """Quantity is not defined for the given distribution kind."""


class PoleError(SojournError, ValueError):
    """A kernel was evaluated on (or numerically at) one of its poles."""


class ContourError(SojournError, ValueError):
    """An integration contour was placed too close to a singularity."""


class NoRootError(SojournError, ValueError):
    """A root solver could not bracket a root."""


class ConvergenceError(SojournError, RuntimeError):
    """A series, quadrature or inversion failed to converge."""


class PCFOverflowError(SojournError, OverflowError):
    """Parabolic cylinder value is not representable in double precision."""


__all__ = [
    "DEFAULT_SUITES_FILENAME",
    "SIG_DIGITS",
    "THREADS_ENV_VAR",
    "ContourError",
    "ConvergenceError",
    "DomainError",
    "NoRootError",
    "PCFOverflowError",
    "PoleError",
    "SojournError",
    "UnsupportedError",
    "__version__",
]
