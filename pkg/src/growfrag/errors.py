"""Exception hierarchy shared by all growfrag modules."""


class GrowFragError(Exception):
    """Base class for every error raised by growfrag."""


class DomainError(GrowFragError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class UnsupportedKernelError(GrowFragError):
    """The kernel family cannot be used for the requested operation."""


class NonConformingError(GrowFragError):
    """Coefficients violate the structural assumptions and no override was given."""


class ConvergenceError(GrowFragError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EigenInconsistencyError(GrowFragError):
    """Primal and dual iterations disagree on the dominant eigenvalue."""


class SchemeError(GrowFragError):
    """A numerical scheme produced an inadmissible state (e.g. negative density)."""


class CFLError(GrowFragError, ValueError):
    """The requested time step violates the stability restriction."""


class BoundaryMassError(GrowFragError):
    """Too much mass reached the truncation boundary of the size domain."""

    def __init__(self, message, t=float("nan"), fraction=float("nan"), trajectory=None):
        super().__init__(message)
        self.t = t
        self.fraction = fraction
        # partial trajectory up to the abort, for post-mortem inspection
        self.trajectory = trajectory


class ScenarioError(GrowFragError, ValueError):
    """A scenario document is malformed; the message names the offending path."""
