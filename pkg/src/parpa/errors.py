"""Exception types shared across the package."""


class ParpaError(Exception):
    """Base class for all package-specific errors."""


class InsufficientDataError(ParpaError):
    """Not enough observations to carry out the requested computation."""


class DegenerateMonthError(ParpaError):
    """A calendar month has zero dispersion where a positive one is required."""


class SingularSystemError(ParpaError):
    """A normal-equation or moment system is singular or numerically rank deficient."""


class PositivityViolationError(ParpaError):
    """The model state admits a nonpositive conditional mean, so no valid
    residual shift exists. Raised instead of silently clamping."""


class DataFormatError(ParpaError):
    """Input data failed validation (calendar gaps, nonpositive values, bad dates)."""


class ConfigError(ParpaError):
    """A run configuration is missing keys, malformed, or inconsistent."""
