"""Exception types shared across the package."""


class AdmissibilityError(ValueError):
    """A ray is parallel to, or points away from, the textured plane."""


class QuadratureError(RuntimeError):
    """Numerical integration failed to reach the requested tolerance."""


class ImageFormatError(ValueError):
    """An image file could not be parsed.

    ``offset`` is the byte position at which parsing stopped, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(ValueError):
    """Input carries no usable signal (constant image, empty mask, ...)."""


class EmptyPatternError(ValueError):
    """A point pattern with no points was passed to an estimator."""
