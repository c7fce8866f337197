"""Exception hierarchy shared across the package."""


class FranksPoissonError(Exception):
    """Base class for all package errors."""


class DimensionError(FranksPoissonError, ValueError):
    pass


class DomainError(FranksPoissonError, ValueError):
    pass


class ComplexSpectrum(FranksPoissonError):
    """A real eigenvalue was expected but the solver returned a complex one."""


class GapTooSmall(FranksPoissonError):
    """Eigenvalues are too clustered for the continuation to be trusted."""


class NondegeneracyFailure(FranksPoissonError):
    pass


class InfeasibleAngle(FranksPoissonError):
    pass


class OutOfRegime(FranksPoissonError):
    """Target matrix is too far from the identity."""


class DivergedError(FranksPoissonError):
    pass


class OutOfTube(FranksPoissonError):
    pass


class NoReturn(FranksPoissonError):
    pass


class NoCrossing(FranksPoissonError):
    pass


class ChartError(FranksPoissonError):
    pass


class DegenerateBase(FranksPoissonError):
    pass
