"""Exception hierarchy shared by all modules."""


class SpatialIdentError(Exception):
    """Base class for every error raised by this package."""


class GraphError(SpatialIdentError, ValueError):
    """Malformed proximity or distance matrix."""


class ZeroDegree(SpatialIdentError, ValueError):
    """A location has no neighbours where positive degrees are required."""


class DomainError(SpatialIdentError, ValueError):
    """Argument outside the mathematical domain of a function or model."""


class NotPositiveDefinite(SpatialIdentError, ValueError):
    """A covariance or precision matrix failed its Cholesky factorisation."""


class DuplicateParameter(SpatialIdentError, ValueError):
    """Two covariance parameters that must be distinct coincide."""


class ConvergenceFailure(SpatialIdentError, RuntimeError):
    """An iterative numerical routine did not converge."""


class InvalidRegion(SpatialIdentError, ValueError):
    """A constructed alternative parameter set leaves the valid model region."""


class CaseNotApplicable(SpatialIdentError, ValueError):
    """A construction was requested outside the regime it covers."""


class NoValidBetaFound(SpatialIdentError, ValueError):
    """The search over alternative treatment effects found no admissible value."""


class AllStartsFailed(SpatialIdentError, RuntimeError):
    """Every start of a multi-start optimisation failed."""
