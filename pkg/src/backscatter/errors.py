"""Exception hierarchy shared by the workbench modules."""


class BackscatterError(Exception):
    """Base class for all errors raised by this package."""


class GridError(BackscatterError, ValueError):
    """Field shapes or grid geometry do not match."""


class SupportError(GridError):
    """A potential's support touches the padding shell of its box."""


class ConvergenceError(BackscatterError, RuntimeError):
    """An iterative solve did not reach its tolerance.

    For the Lippmann-Schwinger system this usually signals a nearly
    singular ``I + B``, i.e. a wavenumber close to a bound-state pole.
    """

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EwaldSingularityError(BackscatterError, ZeroDivisionError):
    """The free-propagator symbol vanishes at the requested frequency."""


class QuadratureError(BackscatterError, RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""


class CoverageError(BackscatterError, ValueError):
    """Backscattering samples leave too much of the frequency ball empty."""


class DivergenceError(BackscatterError, RuntimeError):
    """A fixed-point iteration increased its data misfit repeatedly."""


class ConfigError(BackscatterError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
