"""Exception hierarchy shared by all modules."""


class DistObsError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DistObsError, ValueError):
    pass


class PreconditionError(DistObsError, ValueError):
    pass


class SingularityError(DistObsError, ArithmeticError):
    pass


class ConvergenceError(DistObsError, ArithmeticError):
    pass


class DomainError(DistObsError, ValueError):
    pass


class UnsupportedError(DistObsError, NotImplementedError):
    pass


class DivergenceError(DistObsError, ArithmeticError):
    """Raised when a simulated state leaves the finite range.

    The partial result is attached as ``trajectory`` (may be ``None`` when
    raised from a single integration step).
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
