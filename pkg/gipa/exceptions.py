class GipaError(Exception):
    """Base class for every error raised by the gipa package."""


class ShapeError(GipaError, ValueError):
    pass


class GraphConstructionError(GipaError, ValueError):
    pass


class DatasetError(GipaError):
    pass


class ConfigError(GipaError):
    pass


class CheckpointError(GipaError):
    pass


class NumericError(GipaError, ArithmeticError):
    """Non-finite loss or gradient; `details` carries the diagnostics."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details
