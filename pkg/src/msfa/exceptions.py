"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Invalid input: malformed layout, shape mismatch, out-of-range parameter."""


class NumericalError(ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""
