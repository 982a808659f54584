"""Exception hierarchy for the ultraparabolic toolkit.

Every error carries the process exit status the CLI reports for it.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(ToolkitError):
    """The run configuration is unreadable or invalid."""

    exit_code = 2


class ConfigParseError(ConfigError):
    """The configuration file is not valid JSON."""


class UnknownCheck(ToolkitError):
    """A configuration names a check the harness does not provide."""

    exit_code = 3


class NumericalError(ToolkitError):
    """A numerical or validation failure inside the library."""

    exit_code = 4


class NonIncreasingRanks(NumericalError):
    """Block ranks are not non-increasing."""


class RankDeficientBlock(NumericalError):
    """A superdiagonal drift block does not have full column rank."""


class EllipticityViolation(NumericalError):
    """A diffusion matrix has eigenvalues outside [1/Lambda, Lambda]."""


class ShapeMismatch(NumericalError):
    """Array shapes do not conform."""


class NonPositiveLambda(NumericalError):
    """A dilation factor is not positive."""


class NonPositiveRadius(NumericalError):
    """A radius is not positive."""


class NonPositiveTime(NumericalError):
    """A covariance was requested at a non-positive time."""


class SingularCovariance(NumericalError):
    """The covariance matrix failed the positive-definiteness test."""


class NonPositiveHorizon(NumericalError):
    """A path-sampling horizon is not positive."""


class EmptyGrid(NumericalError):
    """A grid function has no cells."""


class GridTooSmall(NumericalError):
    """An axis has too few nodes for the requested stencil."""


class EmptyIntersection(NumericalError):
    """A region contains no cell centers of the grid."""


class UnderResolvedRegion(EmptyIntersection):
    """A region spans fewer than the minimum number of cells along an axis."""


class EmptyFamily(NumericalError):
    """A center/radius family is empty after filtering."""


class CFLViolation(NumericalError):
    """The time step exceeds the transport stability bound."""


class ImplicitSolveDiverged(NumericalError):
    """The implicit diffusion solve produced non-finite values."""


class SupportViolation(NumericalError):
    """A test function is not supported inside the domain."""


class GeometryOutOfDomain(NumericalError):
    """A check geometry does not fit inside the grid box."""


class DegenerateLadder(NumericalError):
    """A decay ladder has fewer than three usable radii."""


class BadLambda(NumericalError):
    """A Morrey exponent lies outside (0, Q+2)."""
