"""Exception hierarchy shared by every module of the package."""


class MHDError(Exception):
    """Base class for all package errors."""


class DomainError(MHDError, ValueError):
    """Thermodynamic or geometric input outside the admissible domain."""


class TabulationError(MHDError):
    """A tabulated function was queried where it cannot be extended."""


class NumericalError(MHDError):
    """A numerical procedure (stencil, root find) could not be carried out."""


class StructuralViolation(MHDError):
    """An equation-of-state structural hypothesis failed.

    The failed clause name is kept in ``clause``.
    """

    def __init__(self, clause, message=""):
        self.clause = clause
        super().__init__(f"{clause}: {message}" if message else clause)


class StencilError(MHDError):
    """Not enough neighbouring cells to apply a difference stencil."""


class PositivityError(MHDError):
    """Density or temperature became non-positive during a run."""


class CflError(MHDError):
    """The requested time step violates the stability limit."""


class ConfigError(MHDError, ValueError):
    """Invalid or inconsistent run configuration."""


class SolveError(MHDError):
    """An iterative linear solve did not converge."""


class ConstraintError(MHDError, ValueError):
    """A field violates the boundary or divergence constraints of its class."""


class GridMismatch(MHDError, ValueError):
    """Two objects that must share a grid do not."""


class AlignmentError(MHDError, ValueError):
    """Two time series that must share snapshot times do not."""


class DataError(MHDError, ValueError):
    """Input data is malformed (for example a negative energy series)."""


class DegenerateError(MHDError):
    """A ratio has a vanishing denominator and non-vanishing numerator."""


class WeightError(MHDError, ValueError):
    """Young-measure weights are negative or not normalised."""


class HypothesisViolation(MHDError):
    """A scenario monitor detected a violated theorem hypothesis."""

    def __init__(self, hypothesis, message):
        self.hypothesis = hypothesis
        super().__init__(f"{hypothesis}: {message}")
