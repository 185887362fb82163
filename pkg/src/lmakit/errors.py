"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its preconditions."""


class ConfigurationError(ValueError):
    """A configuration value is invalid."""


class UnsupportedActivationError(ValueError):
    """The activation cannot be used for the requested analysis."""


class InvariantError(RuntimeError):
    """Internal state violates a documented invariant."""


class TrainingFailure(RuntimeError):
    """Training diverged (non-finite loss or parameters)."""


class FormatError(ValueError):
    """A binary file does not follow the expected layout."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
