"""Exception hierarchy shared by the solver layers."""


class BilevelTuneError(Exception):
    """Base class for all package errors."""


class ConfigError(BilevelTuneError, ValueError):
    """Bad or unknown configuration entry."""


class SolverError(BilevelTuneError):
    """Base for numerical failures. ``run_log`` is attached by the outer solver."""

    run_log = None


class InvalidConditioningError(SolverError, ValueError):
    pass


class DegenerateRateError(SolverError, ValueError):
    pass


class NotStronglyConvexError(SolverError, ValueError):
    pass


class DivergenceError(SolverError):
    pass


class AccuracyUnreachableError(SolverError):
    """Safety cap hit before the certificate met the target."""

    def __init__(self, message, best_certificate, task_index=None):
        super().__init__(message)
        self.best_certificate = best_certificate
        self.task_index = task_index

    def __str__(self):
        msg = super().__str__()
        if self.task_index is not None:
            msg = f"task {self.task_index}: {msg}"
        return f"{msg} (best certificate {self.best_certificate:.3e})"


class ZeroMatrixError(BilevelTuneError, ValueError):
    pass


class DegenerateGeometryError(SolverError):
    pass


class InfeasibleGeometryError(SolverError):
    pass


class InvalidStepError(SolverError, ValueError):
    pass


class IdxFormatError(BilevelTuneError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SizeError(BilevelTuneError, ValueError):
    pass
