"""Exception hierarchy shared by every module of the package."""


class HfanovaError(Exception):
    """Base class for all library errors."""


class DimensionError(HfanovaError, ValueError):
    """Shapes or bases of the operands do not agree."""


class SingularityError(HfanovaError, ArithmeticError):
    """A per-k matrix is numerically singular."""


class DomainError(HfanovaError, ValueError):
    """An argument lies outside the domain of the operation."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class RankError(HfanovaError, ArithmeticError):
    """A design or contrast matrix is rank deficient at some frequency k."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class ValidationError(HfanovaError, ValueError):
    """A structural invariant of an input object is violated."""


class AccuracyError(HfanovaError, ArithmeticError):
    """Numerical quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class NumericError(HfanovaError, ArithmeticError):
    """A root-finding or bracketing step failed."""


class ConvergenceError(HfanovaError, ArithmeticError):
    """A truncated series fails the tail-ratio heuristic."""
