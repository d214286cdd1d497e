"""Exception types shared across the toolkit."""


class NflsynthError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(NflsynthError):
    """Matrix or vector dimensions do not conform."""


class NonFinite(NflsynthError):
    """An array contains NaN or infinite entries."""


class Singular(NflsynthError):
    """A linear solve or inverse failed (condition estimate above threshold)."""


class NoConvergence(NflsynthError):
    """An implicit-equation solver did not reach its tolerance within max_iter."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MixedActivation(NflsynthError):
    """Networks that must share one activation have different ones."""


class UnsupportedSlopeBounds(NflsynthError):
    """Slope bounds admit neither the full (alpha*beta < 0) nor the reduced
    (alpha = 0) synthesis path."""


class Infeasible(NflsynthError):
    """The synthesis LMIs are infeasible for this plant and region."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class NumericalFailure(NflsynthError):
    """The SDP backend failed without a conclusive feasibility verdict."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class ContainmentViolation(NflsynthError):
    """A sampled boundary point of the certified ellipsoid left the region."""


class ParseError(NflsynthError):
    """A data file could not be parsed against its schema."""
