"""Exception types raised by the library."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class SingularDensityError(ValueError):
    """A density vanishes where a division by it is required."""


class ConsistencyError(RuntimeError):
    """An internal identity that must hold exactly was violated."""


class InvalidModelError(ValueError):
    """A model does not satisfy the structural assumptions of an algorithm."""


class DivergenceError(RuntimeError):
    """A filter produced non-finite particles.

    Parameters
    ----------
    step : int
        Time index at which the first non-finite value appeared.
    method : str
        Label of the filter that diverged.
    """

    def __init__(self, step, method=""):
        self.step = int(step)
        self.method = method
        label = f"{method} " if method else ""
        super().__init__(f"{label}filter diverged at step {self.step}")
