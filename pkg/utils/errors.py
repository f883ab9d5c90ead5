"""
Error Types - Standardized failure classes and exit-code mapping.

Every failure raised by the library derives from SSMRadNetError so the
command layer can translate it into a process exit code.

Exit codes (CLI):
- 0  success
- 1  unexpected failure
- 2  configuration error
- 3  file format error
- 4  numerical abort
"""

from typing import Optional


class SSMRadNetError(Exception):
    """Base class for all library errors."""


class DimensionError(SSMRadNetError, ValueError):
    """Array shapes do not agree for the requested operation."""


class ContractError(SSMRadNetError, RuntimeError):
    """An operation was called while its pre-condition does not hold."""


class ConfigError(SSMRadNetError, ValueError):
    """Invalid, unknown or incompatible configuration."""


class FormatError(SSMRadNetError, ValueError):
    """
    Malformed binary file.

    Args:
        message: Human-readable description
        offset: Byte offset at which the problem was detected
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class NumericalAbort(SSMRadNetError, RuntimeError):
    """Training produced a non-finite loss."""


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4


def exit_code_for(error: Optional[BaseException]) -> int:
    """
    Convert an exception to a CLI exit code.

    Args:
        error: Raised exception, or None for success

    Returns:
        Process exit code
    """
    if error is None:
        return EXIT_OK

    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    elif isinstance(error, FormatError):
        return EXIT_FORMAT
    elif isinstance(error, NumericalAbort):
        return EXIT_NUMERICAL
    else:
        return EXIT_FAILURE
