"""Exception hierarchy shared by every module.

Each family maps onto a stable CLI exit code (see :mod:`vstreamdrls.cli`).
"""


class VStreamError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(VStreamError, ValueError):
    exit_code = 2


class ContractError(VStreamError, ValueError):
    """A precondition of an operation was violated by the caller."""

    exit_code = 2


class DimensionError(ContractError):
    """Operand shapes do not chain."""


class DataError(VStreamError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class UndefinedMetricError(DataError):
    """A metric or loss whose denominator would be zero."""


class EmptyTestSetError(UndefinedMetricError):
    pass


class NumericError(VStreamError, ArithmeticError):
    exit_code = 4
