"""Exception hierarchy shared by all modules."""


class RoughLayerError(Exception):
    """Base class for errors raised by this package."""


class GeometryError(RoughLayerError, ValueError):
    pass


class MeshError(RoughLayerError):
    pass


class AssemblyError(RoughLayerError):
    pass


class SolverError(RoughLayerError):
    """Raised when a linear solve fails.

    ``diagnostics`` carries whatever the failing solver could report
    (pivot information, achieved residual, iteration count).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(RoughLayerError, ValueError):
    pass


class AnalysisError(RoughLayerError, ValueError):
    pass


class StepError(RoughLayerError):
    """A time step failed; ``trajectory`` holds what was computed before."""

    def __init__(self, message, trajectory=None, diagnostics=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.diagnostics = dict(diagnostics or {})
