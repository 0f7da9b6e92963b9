"""
Error Types
-----------
Exceptions shared by the kernel, growth, grid, solver and experiment modules.
"""

from typing import List, Optional, Sequence


class GrowCoagError(Exception):
    """Base class for every error raised by this package"""


class DomainError(GrowCoagError, ValueError):
    """An argument lies outside the mathematical domain (v <= 0, n < 2, ...)"""


class InputError(GrowCoagError):
    """Tabulated input data is unreadable or not a valid density"""


class ConfigurationError(GrowCoagError):
    """Components were combined in a way the solver cannot honour"""


class ConfigFileError(ConfigurationError):
    """The configuration file does not exist"""


class ConfigParseError(ConfigurationError):
    """The configuration file is not well-formed sectioned text"""


class ConfigValidationError(ConfigurationError):
    def __init__(self, violations: Sequence[str]):
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations))


class FlowError(GrowCoagError):
    """A characteristic curve left the positive half-line"""


class NonconvergenceError(GrowCoagError):
    def __init__(self, message: str, residuals: Sequence[float], partial: Optional[object] = None):
        self.residuals: List[float] = list(residuals)
        self.partial = partial
        super().__init__(message)


class InvariantViolation(GrowCoagError):
    """A verified property failed beyond its tolerance"""
