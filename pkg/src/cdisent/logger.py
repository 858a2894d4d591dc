from enum import IntEnum
from typing import Any

from rich.console import Console
from rich.style import Style
from rich.text import Text


class LogLevel(IntEnum):
    """Log levels for controlling output verbosity."""
    ERROR = 0    # Only errors
    WARNING = 1  # Errors and suspicious results
    INFO = 2     # Normal output
    DEBUG = 3    # Detailed output


class Logger:
    """
    A structured logger that provides leveled logging with rich formatting.

    Handles different types of log messages (debug, info, warning, error) with
    customizable styling and visibility levels. Output goes to stderr so that
    tables written to stdout stay machine readable.

    Log Levels:
    - ERROR (0): Only critical errors
    - WARNING (1): Numeric guards that fired, skipped cells, failed soft checks
    - INFO (2): Standard run information
    - DEBUG (3): Per-epoch and per-check traces
    """

    def __init__(self, level: LogLevel = LogLevel.INFO):
        """Initialize logger with specified verbosity level."""
        self.console = Console(stderr=True)
        self.level = level
        self.level_styles = {
            LogLevel.DEBUG: Style(color="yellow", bold=False),
            LogLevel.INFO: Style(color="bright_blue", bold=False),
            LogLevel.WARNING: Style(color="magenta", bold=False),
            LogLevel.ERROR: Style(color="bright_red", bold=True),
        }

        self.level_prefix = {
            LogLevel.DEBUG: "DEBUG",
            LogLevel.INFO: "INFO",
            LogLevel.WARNING: "WARNING",
            LogLevel.ERROR: "ERROR",
        }

    def __log(self, title: str, content: Any, style: str, level: LogLevel = LogLevel.INFO):
        if level <= self.level:
            message = Text()
            message.append(f"[{self.level_prefix[level]}] ", self.level_styles[level])

            style = Style.parse(style)
            message.append(f"{title}: ", style)
            message.append(str(content), style)

            self.console.print(message)

    def debug(self, title: str, content: Any, style: str = "yellow"):
        self.__log(title, content, style, LogLevel.DEBUG)

    def info(self, title: str, content: Any, style: str = "blue"):
        self.__log(title, content, style, LogLevel.INFO)

    def warning(self, title: str, content: Any, style: str = "magenta"):
        self.__log(title, content, style, LogLevel.WARNING)

    def error(self, title: str, content: Any, style: str = "red"):
        self.__log(title, content, style, LogLevel.ERROR)


_default_logger = Logger(LogLevel.WARNING)


def get_logger() -> Logger:
    """Return the logger shared by library modules."""
    return _default_logger


def set_log_level(level: LogLevel):
    _default_logger.level = LogLevel(level)
