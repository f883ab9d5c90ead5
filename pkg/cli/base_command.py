"""
Base Command.

Foundation class for every CLI command: timing, logging, error capture and
a uniform result dict.
"""

import argparse
import logging
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from typing import Any, Dict

from utils.errors import EXIT_OK, SSMRadNetError, exit_code_for


class BaseCommand(ABC):
    """
    Base class for all commands.

    Provides common functionality:
    - Execution timing
    - Logging and error handling
    - Standardized result dict with an exit code
    """

    name: str = "command"
    help: str = ""

    def __init__(self):
        self.logger = logging.getLogger(f"cli.{self.name}")

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register command-specific arguments."""

    def execute(self, args: argparse.Namespace) -> Dict[str, Any]:
        """
        Run the command.

        Args:
            args: Parsed command line

        Returns:
            Result with status, data or error, exit_code and metadata
        """
        start_time = datetime.now(timezone.utc)
        self.logger.info(f"{self.name}: Starting execution")

        try:
            data = self._run(args)
            end_time = datetime.now(timezone.utc)
            execution_time_ms = int((end_time - start_time).total_seconds() * 1000)
            self.logger.info(f"{self.name}: Finished in {execution_time_ms} ms")
            return {
                "status": "success",
                "command": self.name,
                "data": data,
                "exit_code": EXIT_OK,
                "metadata": {
                    "execution_time_ms": execution_time_ms,
                    "timestamp": end_time.isoformat(),
                },
            }

        except Exception as e:
            expected = isinstance(e, SSMRadNetError)
            self.logger.error(f"{self.name}: Execution failed: {e}", exc_info=not expected)
            return {
                "status": "error",
                "command": self.name,
                "error": str(e),
                "error_type": type(e).__name__,
                "exit_code": exit_code_for(e),
                "metadata": {
                    "timestamp": datetime.now(timezone.utc).isoformat(),
                },
            }

    @abstractmethod
    def _run(self, args: argparse.Namespace) -> Dict[str, Any]:
        """
        Command-specific logic.

        Args:
            args: Parsed command line

        Returns:
            Command-specific result data
        """
