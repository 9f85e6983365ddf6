"""Exception types raised across the package."""


class SimplexSphereError(Exception):
    pass


class SpecInvalidError(SimplexSphereError, ValueError):
    """Raised when (n, b) describe an empty set, i.e. not 1 <= b < n."""


class InadmissibleParamsError(SimplexSphereError, ValueError):
    """exp(-r x^2 - s x) is not integrable on (0, inf) for these (r, s)."""


class OutOfRangeError(SimplexSphereError, ValueError):
    pass


class ConditioningError(SimplexSphereError, ValueError):
    pass


class NonConvergenceError(SimplexSphereError, RuntimeError):
    pass


class InfeasibleRejectionError(SimplexSphereError, RuntimeError):
    def __init__(self, message, proposals=0, accepts=0):
        super().__init__(message)
        self.proposals = proposals
        self.accepts = accepts


class EmptyFiberError(SimplexSphereError, ValueError):
    pass


class InternalStateError(SimplexSphereError, RuntimeError):
    pass


class DegenerateCovarianceError(SimplexSphereError, ValueError):
    pass


class InconclusiveError(SimplexSphereError, RuntimeError):
    def __init__(self, message, counts=None):
        super().__init__(message)
        self.counts = counts or {}
