"""Exception types shared across the package.

The CLI maps these onto exit codes: :class:`DataError` -> 2,
:class:`InvariantError` -> 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data.

    ``location`` is a free-form position hint (record index, ``file:line``,
    byte offset) included in the message when given.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for an op."""
