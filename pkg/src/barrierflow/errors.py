"""Exception hierarchy shared by every module of the package."""


class BarrierFlowError(Exception):
    """Base class for all package errors."""


class DomainViolation(BarrierFlowError, ValueError):
    """A point lies on or outside the open domain where an operation is defined."""


class SingularMetric(BarrierFlowError):
    """The barrier Hessian cannot be formed reliably (point numerically on the boundary)."""


class RangeViolation(BarrierFlowError, ValueError):
    """A dual point lies outside the range of the mirror map."""


class NoConvergence(BarrierFlowError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class RankDeficient(BarrierFlowError):
    """Constraint Jacobian (or its metric Gram matrix) is numerically rank deficient."""


class RetractionFailed(BarrierFlowError):
    pass


class StepRejected(BarrierFlowError):
    pass


class NotSelfConcordant(BarrierFlowError):
    pass


class DualNewtonFailed(NoConvergence):
    pass


class UnknownProblem(BarrierFlowError, KeyError):
    pass


class ExtensionUnavailable(BarrierFlowError):
    """The boundary extension of the projected inverse metric is not available for a kernel."""


class UnsupportedRegion(BarrierFlowError):
    pass


class NoExit(BarrierFlowError):
    pass


class ConfigError(BarrierFlowError, ValueError):
    pass
