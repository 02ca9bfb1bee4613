"""Exception types shared across the toolkit."""


class LrcError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(LrcError):
    pass


class NotSymmetric(LrcError):
    pass


class NotPositiveDefinite(LrcError):
    """Raised when a pivot of a Cholesky factorization is not positive.

    Carries the zero-based pivot index so callers can tell how far the
    factorization got (typically a signal that damping must be raised).
    """

    def __init__(self, pivot_index: int, message: str | None = None):
        self.pivot_index = pivot_index
        super().__init__(
            message or f"matrix is not positive definite (pivot {pivot_index} <= 0)"
        )


class RankOutOfBounds(LrcError):
    pass


class BadGroupsize(LrcError):
    pass


class EmptyCandidates(LrcError):
    pass


class AlreadyFinalized(LrcError):
    pass


class EmptyStats(LrcError):
    pass


class BadIterationCount(LrcError):
    pass


class DimNotPowerOfTwo(LrcError):
    pass


class ConfigError(LrcError):
    pass


class TensorFileError(LrcError):
    pass
