"""Exception types raised across the package."""


class FreeConvError(Exception):
    """Base class for all package errors."""


class MeasureError(FreeConvError, ValueError):
    """A measure violates one of its invariants or a constructor argument is bad."""


class DomainError(FreeConvError, ValueError):
    """A transform was requested at a point on (or too close to) the support."""


class DegenerateTransformError(FreeConvError, ArithmeticError):
    """The Stieltjes transform vanished, so F = -1/m is undefined."""


class SolverDivergedError(FreeConvError, ArithmeticError):
    """The subordination solver did not reach the requested tolerance.

    Attributes
    ----------
    best : SubordinationPair or None
        Best iterate found before giving up.
    index : int or None
        Position of the failing point inside a sweep, when relevant.
    """

    def __init__(self, message, best=None, index=None):
        super().__init__(message)
        self.best = best
        self.index = index


class InstabilityError(SolverDivergedError):
    """An iterate left the upper half-plane by more than the tolerance."""


class SingularJacobianError(FreeConvError, ArithmeticError):
    """The linearisation of the subordination system is (numerically) singular."""


class BoundaryExtensionError(FreeConvError, ArithmeticError):
    """Extrapolation of boundary values to the real axis was unstable."""


class EdgeNotFoundError(FreeConvError, ArithmeticError):
    """No zero of the stability determinant was found in the scanned range."""


class ExpansionFitError(FreeConvError, ArithmeticError):
    """The square-root fit at the edge has an unacceptable residual."""


class NumericalConsistencyError(FreeConvError, ArithmeticError):
    """A matrix-level consistency check (hermiticity, unitarity, ...) failed."""


class InsufficientDataError(FreeConvError, ValueError):
    """Too few trials for a statistical gate."""


class DegeneratePivotError(FreeConvError, ArithmeticError):
    """The pivot entry of a Haar column is too small to define its phase."""


class WeightSingularityError(FreeConvError, ArithmeticError):
    """A weight ``1/(a_i - omega)`` is singular."""
