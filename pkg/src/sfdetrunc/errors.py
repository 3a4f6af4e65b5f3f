"""Exception hierarchy shared by all modules."""


class SfdeError(Exception):
    """Base class for every error raised by this package."""


class DivergentMomentError(SfdeError, ValueError):
    """Exponential moment of a delay measure is infinite."""


class MassError(SfdeError, ValueError):
    """A delay measure does not carry total mass one."""


class NonGeneratorError(SfdeError, ValueError):
    """Matrix is not the generator of a continuous-time Markov chain."""


class ReducibleError(SfdeError, ValueError):
    """Stationary distribution is not unique."""


class GridMismatchError(SfdeError, ValueError):
    """Discretized measure and history window live on different grids."""


class FastPathUnavailable(SfdeError, TypeError):
    """Recursive convolution requested for a measure that has no recurrence."""


class ConsistencyError(SfdeError, RuntimeError):
    """Recursive and direct convolutions drifted apart."""


class NonFiniteError(SfdeError, FloatingPointError):
    """A coefficient or state evaluated to NaN or infinity."""


class BlowUpError(SfdeError, FloatingPointError):
    """A trajectory left the ball of radius ``guard``.

    ``sample`` and ``param`` identify the offending path when known.
    """

    def __init__(self, message, sample=None, step=None, param=None):
        super().__init__(message)
        self.sample = sample
        self.step = step
        self.param = param


class UnknownModelError(SfdeError, KeyError):
    pass


class NonDyadicError(SfdeError, ValueError):
    """Step size is not a power-of-two multiple of the finest step."""


class DegenerateFitError(SfdeError, ValueError):
    pass


class ConfigError(SfdeError, ValueError):
    """Invalid run configuration. ``path`` points at the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
