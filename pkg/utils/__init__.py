"""Shared utilities: errors, settings, logging."""
from .errors import (
    SSMRadNetError,
    DimensionError,
    ContractError,
    ConfigError,
    FormatError,
    NumericalAbort,
    exit_code_for,
)
from .settings import RuntimeSettings, get_settings

__all__ = [
    'SSMRadNetError', 'DimensionError', 'ContractError', 'ConfigError',
    'FormatError', 'NumericalAbort', 'exit_code_for',
    'RuntimeSettings', 'get_settings',
]
