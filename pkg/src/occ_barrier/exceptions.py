"""Exception hierarchy shared by every module of the toolkit."""
from __future__ import annotations

from typing import Optional


class OCCError(Exception):
    """Root of all toolkit errors."""


class ValidationError(OCCError, ValueError):
    """A value violates a documented precondition."""


class DimensionError(ValidationError):
    """Array shapes do not compose."""


class UnsupportedConfigurationError(ValidationError):
    """The requested combination of options is not implemented."""


class IngestionError(ValidationError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(ValidationError):
    """An experiment configuration key is missing, unknown or malformed."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NonFiniteLossError(OCCError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value
