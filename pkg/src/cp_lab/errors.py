"""Exception types shared across the package."""

__all__ = [
    "CpLabError",
    "EmptyGraphError",
    "BallTooLarge",
    "StateSpaceTooLarge",
    "EdgeListFormatError",
    "ConfigError",
]


class CpLabError(Exception):
    """Base class for errors raised by cp-lab."""


class EmptyGraphError(CpLabError):
    """Raised when an operation needs at least one vertex but got none."""


class BallTooLarge(CpLabError):
    """A neighborhood ball exceeded its vertex budget."""

    def __init__(self, size: int, cap: int, msg: str | None = None):
        self.size = size
        self.cap = cap
        super().__init__(msg or f"ball has {size} vertices, cap is {cap}")


class StateSpaceTooLarge(CpLabError):
    """The exact CTMC solver was asked for more states than it supports."""


class EdgeListFormatError(CpLabError):
    """Malformed edge-list text; carries the 1-based offending line number."""

    def __init__(self, line_no: int, msg: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}")


class ConfigError(CpLabError):
    """Invalid experiment configuration."""
