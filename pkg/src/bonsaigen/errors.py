"""Exception hierarchy shared by all bonsaigen modules."""


class BonsaiError(Exception):
    """Base class for every toolkit error."""


class ValidationError(BonsaiError):
    """Invalid input data or parameters (CLI exit code 2)."""


class NonPositiveValueError(ValidationError):
    """A parameter that must be strictly positive is zero or negative."""


class OrderingViolationError(ValidationError):
    """delta_l < d_kill < d_influence does not hold."""


class InvariantViolationError(ValidationError):
    """A structural invariant is broken (cycle, dangling reference, bad step length, ...)."""


class ParseError(BonsaiError):
    """Input bytes do not decode to the documented schema."""


class DegenerateDirectionError(BonsaiError):
    """Weighted attractor directions cancel out; no growth direction exists."""


class UnsizedSkeletonError(ValidationError):
    """Meshing requires every node size to be positive; run the sizing pass first."""


class EmptyMeshError(ValidationError):
    """Operation needs a mesh with at least one face."""


class TooFewPointsError(ValidationError):
    """Gaussian initialization needs at least 4 surface points."""


class SingularCovarianceError(ValidationError):
    """Covariance matrix is not symmetric positive definite."""


class EmptyForegroundError(ValidationError):
    """Mask contains no foreground pixels."""
