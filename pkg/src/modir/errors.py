"""Exception types shared across the package.

Every error carries a short machine-parsable ``code`` so the CLI can emit
``error[<code>]: message`` lines and exit nonzero.
"""


class ModirError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class InvalidConfigError(ModirError):
    code = "invalid-config"


class DimensionMismatchError(ModirError):
    code = "dim-mismatch"


class UnknownLanguageError(ModirError):
    code = "unknown-language"


class StageError(ModirError):
    """Raised when a training operation is invoked in the wrong stage."""

    code = "stage"


class NonFiniteError(ModirError):
    code = "non-finite"


class EmptyInputError(ModirError):
    code = "empty-input"


class UnknownPassageError(ModirError):
    code = "unknown-passage"


class UnknownMetricError(ModirError):
    code = "unknown-metric"


class ParseError(ModirError):
    """Malformed input file; ``line`` is 1-based when known."""

    code = "parse"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ModirError):
    """Corrupt or incompatible binary artifact (checkpoint, index, embeddings)."""

    code = "format"
