"""
Error hierarchy for tailcert.

Library code raises these; only the command-line layer turns them into exit codes.
"""

from typing import Optional


class TailCertError(Exception):
    """Base class for every error raised by tailcert."""


class ConfigError(TailCertError):
    """Invalid configuration value."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class UsageError(TailCertError):
    """Command-line arguments that do not match any subcommand grammar."""


class ShapeError(TailCertError):
    """Dimension mismatch between vectors, matrices or network layers."""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        self.layer_index = layer_index
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class DomainError(TailCertError, ValueError):
    """Argument outside the domain of an operation."""


class CapabilityError(TailCertError):
    """A certificate needs a parameter the latent specification cannot provide."""


class NonConvergenceError(TailCertError):
    """Power iteration did not converge within its iteration budget."""

    def __init__(self, message: str, last_estimate: float):
        self.last_estimate = last_estimate
        super().__init__(f"{message} (last estimate {last_estimate!r})")


class DefinitenessError(TailCertError):
    """Matrix is not symmetric positive definite."""

    def __init__(self, message: str, pivot_index: Optional[int] = None):
        self.pivot_index = pivot_index
        if pivot_index is not None:
            message = f"{message} (pivot {pivot_index})"
        super().__init__(message)


class NetworkFormatError(TailCertError):
    """Network file violates the documented format."""

    def __init__(self, field: str, message: str, index: Optional[int] = None):
        self.field = field
        self.index = index
        where = field if index is None else f"layers[{index}].{field}"
        super().__init__(f"{where}: {message}")


class IngestionError(TailCertError):
    """Price CSV that cannot be turned into returns."""

    def __init__(self, path: str, message: str, row: Optional[int] = None):
        self.path = path
        self.row = row
        where = path if row is None else f"{path} line {row}"
        super().__init__(f"{where}: {message}")
