"""Exception hierarchy shared by all modules."""


class LotkitError(Exception):
    """Base class for every error raised by the library."""


class NumericalError(LotkitError, RuntimeError):
    """A computation failed for numerical reasons (divergence, breakdown)."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap before reaching tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    violation : float, optional
        Final value of the convergence criterion.
    """

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class NotPSDError(NumericalError, ValueError):
    """A matrix expected to be positive (semi)definite is not."""


class IncompatibleBaseError(LotkitError, ValueError):
    """Two sampled maps do not live on the same base sample."""


class BudgetError(LotkitError, ValueError):
    """A dense exact solve would exceed the configured size budget."""
