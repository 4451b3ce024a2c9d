"""Exception types shared across the package."""


class DelayOCError(Exception):
    """Base class for all delayoc errors."""


class NonCommensurable(DelayOCError):
    """Raised when the delay ratio admits no acceptable rational reduction."""


class StrictGridViolation(DelayOCError):
    """Raised in strict mode when the subdivision count fails N > 2k+1."""


class CoverageError(DelayOCError):
    """A trajectory does not span the time window an operation requires."""


class DimensionMismatch(DelayOCError):
    """A user callable returned a value of the wrong shape."""


class OutOfWindow(DelayOCError):
    """A block-matrix query lies outside the reduction window."""


class SeamMismatch(DelayOCError):
    """Adjacent blocks of a stacked trajectory disagree at their shared seam."""


class NonFinite(DelayOCError):
    """An integration step produced NaN or infinity."""


class IndivisibleStep(DelayOCError):
    """The requested subdivision does not divide the delays exactly."""


class MaximizerFailure(DelayOCError):
    """A numeric pointwise maximizer failed to converge."""


class NoConvergence(DelayOCError):
    """An iterative solve hit its iteration cap before meeting tolerance.

    Carries the last iterate so callers can still inspect or report it.
    """

    def __init__(self, message, last=None, history=None):
        super().__init__(message)
        self.last = last
        self.history = history if history is not None else []


class SpecFormatError(DelayOCError):
    """A problem spec file failed to parse; carries line/column info."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)
