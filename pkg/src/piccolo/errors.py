"""Exception types shared across the package."""


class PiccoloError(Exception):
    """Base class for all library errors."""


class StructuralError(PiccoloError, ValueError):
    """Shapes, dimensions or indices that do not fit together."""


class NumericError(PiccoloError, ArithmeticError):
    """Non-finite values or a numerical procedure that broke down."""


class DomainError(NumericError):
    """A point outside the domain of a Bregman generator."""


class UnsupportedError(PiccoloError, NotImplementedError):
    """A combination of options that the library does not handle."""


class ConfigError(PiccoloError, ValueError):
    """Invalid experiment configuration."""


class NumericAbort(NumericError):
    """A run hit a non-finite state; carries the offending round index."""

    def __init__(self, round_index: int, message: str = ""):
        self.round_index = round_index
        super().__init__(f"non-finite state at round {round_index}" + (f": {message}" if message else ""))
