"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition or invariant."""


class DataError(ValueError):
    """Malformed or unusable input data (CSV parsing, empty files)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond its documented fallbacks."""
