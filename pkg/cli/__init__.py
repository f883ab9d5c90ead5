"""Command-line surface: run configuration, commands and entry point."""
from .run_config import RunConfig, SimConfig, BenchConfig, load_run_config, parse_config_text, build_run_config
from .base_command import BaseCommand
from .commands import (
    COMMANDS, command_simulate, command_train, command_eval, command_infer, command_bench, command_inspect,
)
from .main import main, build_parser

__all__ = [
    'RunConfig', 'SimConfig', 'BenchConfig', 'load_run_config', 'parse_config_text', 'build_run_config',
    'BaseCommand', 'COMMANDS',
    'command_simulate', 'command_train', 'command_eval', 'command_infer', 'command_bench', 'command_inspect',
    'main', 'build_parser',
]
