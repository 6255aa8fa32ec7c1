"""Exception hierarchy shared by the library and the command line."""


class VLCornerError(Exception):
    """Base class; ``category`` is printed by the CLI next to the message."""

    category = "error"
    exit_code = 1


class InputError(VLCornerError, ValueError):
    category = "input"
    exit_code = 2


class ValidationError(InputError):
    """A record failed schema or invariant checks.

    ``line`` is the 1-based line number in the source file when known.
    """

    category = "validation"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(VLCornerError):
    category = "config"
    exit_code = 3


class NumericalError(VLCornerError, FloatingPointError):
    """A non-finite value appeared during forward or backward propagation."""

    category = "numerical"
    exit_code = 4


class StorageError(VLCornerError, OSError):
    category = "io"
    exit_code = 5
