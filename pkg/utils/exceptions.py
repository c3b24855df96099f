# utils/exceptions.py

from typing import Dict, Optional


class DrocoLabError(Exception):
    """Base class for every error raised by the lab"""


class ValidationError(DrocoLabError, ValueError):
    """An MDP, table or spec violates a documented invariant"""


class ConfigError(DrocoLabError, ValueError):
    """Invalid or incomplete configuration"""


class DatasetParseError(DrocoLabError, ValueError):
    """Malformed JSON-lines dataset"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptySupportError(DrocoLabError):
    """A reachable state has no in-support action"""


class ConvergenceError(DrocoLabError):
    """Iteration cap exceeded by a fixed-point solver"""


class SupportConditionError(DrocoLabError):
    """Support condition of the train/test-time bounds cannot be met"""


class DivergenceError(DrocoLabError):
    """Training tables exceeded the divergence guard"""

    def __init__(self, message: str, diagnostics: Optional[Dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
