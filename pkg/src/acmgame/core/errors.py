"""Exception taxonomy shared by every module of the package."""


class AcmError(Exception):
    """Base class for all errors raised by acmgame."""


class ParseError(AcmError):
    """The configuration file could not be parsed."""


class ValidationError(AcmError):
    """A configuration or model invariant is violated."""


class DimensionMismatch(AcmError, ValueError):
    pass


class RoleMismatch(AcmError, TypeError):
    """An approximator was used in an operation meant for a different role."""


class EmptyGroup(AcmError, ValueError):
    pass


class EmptyTrajectory(AcmError, ValueError):
    pass


class SingularR(AcmError):
    pass


class NumericalAbort(AcmError):
    """Base for errors that abort a running simulation (CLI exit code 3)."""


class NumericalBlowup(NumericalAbort):
    pass


class WeightGuardTripped(NumericalAbort):
    pass


class DegenerateDensity(NumericalAbort):
    """The unnormalized mass integral collapsed to (near) zero."""


class NonFiniteResidual(NumericalAbort):
    pass


class ResidualConsistencyError(NumericalAbort):
    """The critic residual is not affine in the weights as it must be."""


class OutOfGridWarning(UserWarning):
    """A query point was clamped into the mass grid."""
