"""Exception hierarchy shared by all natquant modules."""


class NatquantError(Exception):
    """Base class for every error raised by natquant."""


class GeometryError(NatquantError):
    pass


class PointOutsideDomain(GeometryError):
    pass


class StencilClipsBoundary(GeometryError):
    pass


class NonPositiveDefinite(GeometryError):
    pass


class ExpressionError(NatquantError):
    """Raised by the expression-file loader on malformed input."""


class LeftDomain(GeometryError):
    pass


class StepTooLarge(GeometryError):
    pass


class ShootingDiverged(GeometryError):
    pass


class FitIllConditioned(NatquantError):
    pass


class NotInvertible(GeometryError):
    pass


class NotNormalized(NatquantError):
    pass


class GuardViolation(NatquantError):
    pass


class AsymmetryExceeded(NatquantError):
    pass


class SolverFailure(NatquantError):
    pass


class ConjugatePointSuspected(ShootingDiverged):
    pass


class NegativeDeterminant(NatquantError):
    pass
