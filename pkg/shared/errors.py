"""
Exception hierarchy shared by the data, model and solver modules
"""
from typing import Optional


class SubsetSelectionError(Exception):
    """Base class for every error raised by this package"""
    pass


class ParseError(SubsetSelectionError):
    """Malformed LIBSVM input"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(SubsetSelectionError):
    """Invalid parameter or parameter combination"""
    pass


class ContractViolation(SubsetSelectionError, ValueError):
    """A caller broke an operation's precondition (index range, sizes, supports)"""
    pass


class NumericError(SubsetSelectionError, ArithmeticError):
    """Non-finite objective or intermediate value"""
    pass


class OracleScaleError(SubsetSelectionError):
    """Brute-force enumeration refused because the instance is too large"""
    pass
