"""Exception types shared across the package.

Every domain-level failure derives from :class:`HeterogeneityError` so callers
can distinguish statistical preconditions from ordinary programming errors.
"""


class HeterogeneityError(ValueError):
    """Base class for violated statistical preconditions."""


class InsufficientStudies(HeterogeneityError):
    """Fewer than two studies were supplied."""


class InvalidVariance(HeterogeneityError):
    """A variance that must be positive is zero, negative, or non-finite."""


class InvalidStudy(HeterogeneityError):
    """A study record carries non-finite or otherwise unusable values."""


class DegenerateWeights(HeterogeneityError):
    """The weight dispersion term sum(w) - sum(w^2)/sum(w) is not positive."""


class InvalidAdjustedSize(HeterogeneityError):
    """The adjusted mean sample size is below one."""


class InsufficientDegreesOfFreedom(HeterogeneityError):
    """A within-study (or within-arm) variance has no degrees of freedom."""


class DegenerateVariance(HeterogeneityError):
    """A pooled standard deviation collapsed to zero."""


class InsufficientSample(HeterogeneityError):
    """A simulated study would contain fewer than two observations."""
