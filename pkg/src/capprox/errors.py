"""Exception hierarchy shared by every module.

The CLI maps each class to a distinct nonzero exit code.  Code 2 is left to
argparse usage errors and 7 to I/O failures.
"""


class CapproxError(Exception):
    exit_code = 1


class PreconditionError(CapproxError, ValueError):
    exit_code = 3


class ConfigError(CapproxError, ValueError):
    exit_code = 4


class FitError(CapproxError, RuntimeError):
    exit_code = 5

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IncompleteLogError(CapproxError, ValueError):
    exit_code = 6


IO_EXIT_CODE = 7
USAGE_EXIT_CODE = 2
