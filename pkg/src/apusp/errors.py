"""Exception hierarchy shared by the solver, auditor and CLI."""


class ApuspError(Exception):
    """Base class for every error raised by this package."""


class SpecError(ApuspError, ValueError):
    """A model, menu or data file failed validation.

    ``field`` names the offending field or token when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class MissingTableEntryError(ApuspError, KeyError):
    pass


class NonPositiveNormError(ApuspError, ValueError):
    pass


class WeightOverflowError(ApuspError, OverflowError):
    pass


class NonPositiveWeightError(ApuspError, ValueError):
    pass


class CostDomainError(ApuspError, ValueError):
    """Marginal cost requested where it is undefined (entropy at 0 or 1)."""


class MenuMismatchError(ApuspError, ValueError):
    pass


class MissingMenuError(ApuspError, KeyError):
    pass


class EmptySampleError(ApuspError, ValueError):
    pass


class NumericalError(ApuspError, ArithmeticError):
    """Base for solver failures; the CLI maps these to exit code 3."""


class BracketFailure(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    pass
