"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class CapacityError(ValueError):
    """An exact enumeration was requested beyond its size cap."""


class StationarySolveError(RuntimeError):
    """The stationary linear solve failed its residual or positivity checks."""


class DominationError(AssertionError):
    """A coupled trajectory violated X_j(t) <= Xhat_j(t) for some j <= i.

    ``event_index`` is the 0-based index of the offending event and ``log``
    holds whatever event rows were recorded up to and including it.
    """

    def __init__(self, message, event_index=None, log=None):
        super().__init__(message)
        self.event_index = event_index
        self.log = log if log is not None else []
