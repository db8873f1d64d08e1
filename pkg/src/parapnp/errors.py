"""Exception types raised by the solvers and models."""


class PoseError(Exception):
    """Base class for every error raised by this package."""


class BehindCameraError(PoseError):
    """A point has non-positive depth in the camera frame."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateConfigurationError(PoseError):
    """Input geometry is rank deficient (collinear, coplanar or singular)."""


class InsufficientPointsError(PoseError):
    """Fewer correspondences than the solver needs."""


class CheiralityError(PoseError):
    """No candidate solution places the scene in front of the camera."""


class NumericalFailureError(PoseError):
    """An iteration produced non-finite values."""


class DomainError(PoseError, ValueError):
    """A model quantity is undefined for the given arguments."""
