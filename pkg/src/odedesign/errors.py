"""Exception types shared across the package."""


class OdeDesignError(Exception):
    """Base class for package errors."""


class ConfigError(OdeDesignError):
    """Invalid configuration, design, or input file."""


class NumericalError(OdeDesignError):
    """Numerical failure: factorization breakdown, underflow, non-finite values."""
