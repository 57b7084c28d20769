"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, NumericFault -> 2.
"""


class ShapeError(ValueError):
    """Array dimensions disagree with the declared network/environment layout."""


class NumericFault(ArithmeticError):
    """A non-finite value appeared where finite arithmetic is required.

    ``index`` points at the first offending component when known.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class EmptyArchiveError(RuntimeError):
    """Selection was attempted on an archive with no occupied cells."""


class EmptyBufferError(RuntimeError):
    """Sampling was attempted on a replay buffer holding no transitions."""


class ConfigError(ValueError):
    """A run configuration key is unknown, malformed, or out of range."""
