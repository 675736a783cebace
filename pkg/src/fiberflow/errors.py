"""Exception hierarchy shared by all fiberflow modules."""


class FiberflowError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FiberflowError):
    """Invalid family specification or run configuration."""


class OutsideDomainError(FiberflowError):
    """Evaluation requested at a point with r >= 0."""


class DegenerateFamilyError(FiberflowError):
    """Fiber complex Hessian not positive definite / log argument <= 0."""


class DegenerateMetricError(FiberflowError):
    """A (1,1)-form fiber block is not positive definite.

    Carries an estimate of the offending eigenvalue in ``eigenvalue``.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class EmptyMaskError(FiberflowError):
    """Grid truncation left no nodes inside the fiber."""


class FlowBreakdownError(FiberflowError):
    """Evolved fiber metric lost positivity at some node."""

    def __init__(self, message, worst_node=None, worst_value=None):
        super().__init__(message)
        self.worst_node = worst_node
        self.worst_value = worst_value


class StabilityError(FiberflowError):
    """Requested time step exceeds the parabolic stability bound."""


class NonconvergenceError(FiberflowError):
    """Newton iteration failed; ``history`` holds the residual norms."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class OracleDefectError(FiberflowError):
    """A closed-form oracle failed its own consistency check."""


class SnapshotMismatchError(FiberflowError):
    """On-disk snapshots do not match the requested configuration."""
