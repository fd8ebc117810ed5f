"""Exception hierarchy shared by every solver stage."""


class PxlogError(Exception):
    """Base class for all library errors."""


class InvalidMeshError(PxlogError, ValueError):
    pass


class MeshMismatchError(PxlogError, ValueError):
    pass


class ConjugateUndefinedError(PxlogError, ValueError):
    pass


class CriticalUndefinedError(PxlogError, ValueError):
    pass


class UnknownHypothesisError(PxlogError, KeyError):
    pass


class SingularEvaluationError(PxlogError, ValueError):
    pass


class InvalidParameterError(PxlogError, ValueError):
    pass


class PreconditionError(PxlogError, ValueError):
    pass


class DivergedError(PxlogError, RuntimeError):
    """A nonlinear iteration failed to reach its tolerance.

    ``report`` carries whatever the solver collected before giving up
    (a SolveReport, or a dict of residual histories for coupled solves).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CertificationError(PxlogError, RuntimeError):
    pass


class BarrierConstructionError(CertificationError):
    """The lambda-doubling loop hit its cap without a certified box."""

    def __init__(self, message, failed=None, margin=None, lam=None):
        super().__init__(message)
        self.failed = failed
        self.margin = margin
        self.lam = lam


class BoxViolationError(PxlogError, RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class BranchTruncatedError(PxlogError, RuntimeError):
    def __init__(self, message, last_lambda=None, record=None):
        super().__init__(message)
        self.last_lambda = last_lambda
        self.record = record


class OracleFailure(PxlogError, RuntimeError):
    pass


class ConfigError(PxlogError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path:
            where += f" at '{path}'"
        if line is not None:
            where += f" (line {line})"
        super().__init__(message + where)
        self.path = path
        self.line = line
