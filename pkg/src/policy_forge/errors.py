"""Exception types shared across the library."""


class PreconditionError(ValueError):
    """An input violates a documented precondition of an operation."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""
