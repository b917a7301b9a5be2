"""Exception types shared across modules."""


class VerificationError(AssertionError):
    """Two independent computations of the same quantity disagree."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""


class TruncationMismatch(ValueError):
    """Operands live on different windows."""


class WindowError(ValueError):
    """The requested quantity does not fit inside the window."""


class SignPatternError(ValueError):
    """No canonical sign pattern matches the observed positive set.

    ``reason`` is ``"window_too_small"`` when the mismatch is confined to the
    outer face of the window, otherwise ``"inadmissible"``.
    """

    def __init__(self, message: str, reason: str, search_bound: int):
        super().__init__(message)
        self.reason = reason
        self.search_bound = search_bound
