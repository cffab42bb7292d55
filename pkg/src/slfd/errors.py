"""Exception types shared across modules."""


class FormatError(ValueError):
    """A binary or text file does not match its declared format."""


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


class NumericalAbort(ArithmeticError):
    """A distillation epoch produced a non-finite loss."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
