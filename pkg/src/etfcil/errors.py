"""Exception types shared across the toolkit."""


class DimensionTooSmallError(ValueError):
    """Feature dimension is too small for the requested number of classes."""


class DegenerateRotationError(RuntimeError):
    """Random rotation draw stayed rank-deficient after all retries."""


class NotNormalizedError(ValueError):
    """Input vector violates a unit-norm precondition."""


class VanishingNormError(ValueError):
    """Vector norm is below the safe normalization threshold."""


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite loss."""


class ShapeMismatchError(ValueError):
    """Array shapes are inconsistent with the problem description."""


class EmptyClassError(ValueError):
    """A requested class has no samples."""


class DegenerateMeanError(ValueError):
    """A centered class mean has vanishing norm."""


class DegenerateBetweenError(ValueError):
    """Between-class covariance trace is numerically zero."""


class FrozenViolationError(RuntimeError):
    """A parameter that must stay frozen was modified."""
