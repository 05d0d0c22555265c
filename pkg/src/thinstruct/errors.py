"""Exception types shared across the package."""


class ThinStructError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(ThinStructError):
    """Invalid parameter value, shape mismatch, or inconsistent options."""


class DataFormatError(ThinStructError):
    """Malformed input file (image, point list, vector field, ...)."""


class NumericalError(ThinStructError):
    """Numerical failure in the solver (CG breakdown, non-finite residuals)."""
