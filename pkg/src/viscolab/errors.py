"""Exception types shared across the package."""

from __future__ import annotations


class ViscoLabError(Exception):
    """Base class for all package errors."""


class NotSPD(ViscoLabError, ValueError):
    def __init__(self, message: str = "matrix is not symmetric positive definite", index=None):
        super().__init__(message if index is None else f"{message} (at index {index})")
        self.index = index


class SingularMatrix(ViscoLabError, ValueError):
    pass


class TraceBoundViolated(ViscoLabError, ValueError):
    def __init__(self, message: str = "tr A must stay below b", index=None, time=None):
        where = []
        if index is not None:
            where.append(f"index {index}")
        if time is not None:
            where.append(f"t={time:.17g}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))
        self.index = index
        self.time = time


class BadExtensibility(ViscoLabError, ValueError):
    pass


class SPDLost(ViscoLabError, ArithmeticError):
    """Raised when a time step destroys positive definiteness; reduce dt."""

    def __init__(self, message: str = "conformation lost positive definiteness", index=None, time=None):
        where = []
        if index is not None:
            where.append(f"grid index {index}")
        if time is not None:
            where.append(f"t={time:.17g}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix + "; try a smaller dt")
        self.index = index
        self.time = time


class TooFewSnapshots(ViscoLabError, ValueError):
    pass


class SignalTooSmall(ViscoLabError, ValueError):
    pass


class PreconditionUnmet(ViscoLabError, ValueError):
    pass


class PoorFitWarning(UserWarning):
    """Exponential fit with r^2 below threshold; reported, not fatal."""


NUMERICAL_ERRORS = (NotSPD, SingularMatrix, TraceBoundViolated, SPDLost)
