import numpy as np


class HamwaveError(Exception):
    """Base class for all errors raised by hamwave."""


class InvalidArgument(HamwaveError, ValueError):
    pass


class Unsupported(HamwaveError, NotImplementedError):
    pass


class StateError(HamwaveError, RuntimeError):
    """Required time-stepping history is missing."""


class FactorizationFailure(HamwaveError, np.linalg.LinAlgError):
    """A dense factorization could not be completed.

    ``rank`` is the numerical rank found, when known; ``cond`` a condition
    estimate.
    """

    def __init__(self, message, rank=None, cond=None):
        super().__init__(message)
        self.rank = rank
        self.cond = cond


class SingularShift(HamwaveError, ArithmeticError):
    """c_i**2 + lam * s_i**2 vanished in the diagonal solve."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class StalledDerivative(HamwaveError, ArithmeticError):
    """The multiplier update would divide by a (near) zero derivative."""
