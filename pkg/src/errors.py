# src/errors.py
"""
Exception hierarchy shared by the engine and the CLI.

The CLI maps ConfigError / InfeasiblePlanError to exit code 2 and every other
FedSimError to exit code 1.
"""

from __future__ import annotations
from typing import Optional


class FedSimError(Exception):
    """Base class for every simulator error."""


class ShapeMismatchError(FedSimError, ValueError):
    """Two parameter sets (or a batch and a model) do not line up."""


class DatasetError(FedSimError, ValueError):
    """Malformed, empty or inconsistent dataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class ConfigError(FedSimError, ValueError):
    """Invalid configuration value or combination."""


class InfeasiblePlanError(ConfigError):
    """A partition plan asks for more samples of a class than exist."""

    def __init__(self, client_id: int, class_label: int, requested: int, available: int):
        self.client_id = client_id
        self.class_label = class_label
        self.requested = requested
        self.available = available
        super().__init__(
            f"infeasible plan at (client {client_id}, class {class_label}): "
            f"cumulative request {requested} exceeds {available} available samples"
        )


class PrivacyError(FedSimError, ValueError):
    """Invalid privacy mechanism input."""


class RoundError(FedSimError):
    """Failure inside the federated round loop, carrying the round context."""

    def __init__(self, round_index: int, cause: BaseException, client_id: Optional[int] = None):
        self.round_index = round_index
        self.client_id = client_id
        self.cause = cause
        who = f", client {client_id}" if client_id is not None else ""
        super().__init__(f"round {round_index}{who}: {cause}")


class CodecError(FedSimError, ValueError):
    """Truncated or malformed binary tensor payload."""


class OutputError(FedSimError):
    """Missing, corrupt or protected run output."""
