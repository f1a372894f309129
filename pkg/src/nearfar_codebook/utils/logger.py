"""
Logger for the near/far-field codebook simulator
Provides colored, timestamped console logging grouped by simulation stage
"""

import logging
import os
import sys
from datetime import datetime
from enum import Enum
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

try:
    from colorama import Fore, Style, init
    init(autoreset=True)
    COLORAMA_AVAILABLE = True
except ImportError:
    COLORAMA_AVAILABLE = False
    # Fallback color codes for systems without colorama
    class Fore:
        RED = '\033[31m'
        GREEN = '\033[32m'
        YELLOW = '\033[33m'
        BLUE = '\033[34m'
        MAGENTA = '\033[35m'
        CYAN = '\033[36m'
        WHITE = '\033[37m'
        RESET = '\033[0m'

    class Style:
        BRIGHT = '\033[1m'
        RESET_ALL = '\033[0m'


class LogLevel(Enum):
    """Log levels with associated colors and priorities"""
    DEBUG = ("DEBUG", Fore.CYAN, 10)
    INFO = ("INFO", Fore.GREEN, 20)
    WARNING = ("WARNING", Fore.YELLOW, 30)
    ERROR = ("ERROR", Fore.RED, 40)
    CRITICAL = ("CRITICAL", Fore.MAGENTA, 50)

    def __init__(self, name: str, color: str, level: int):
        self.level_name = name
        self.color = color
        self.level = level

    @classmethod
    def from_name(cls, name: Optional[str], default: "LogLevel" = None) -> "LogLevel":
        if not name:
            return default or cls.INFO
        try:
            return cls[name.strip().upper()]
        except KeyError:
            return default or cls.INFO


class LogCategory(Enum):
    """Log categories for the simulation stages"""
    SYSTEM = ("SYSTEM", Fore.BLUE)
    CONFIG = ("CONFIG", Fore.BLUE)
    CHANNEL = ("CHANNEL", Fore.CYAN)
    ESTIMATION = ("ESTIMATION", Fore.YELLOW)
    CODEBOOK = ("CODEBOOK", Fore.MAGENTA)
    PRECODING = ("PRECODING", Fore.GREEN)
    EXPERIMENT = ("EXPERIMENT", Fore.WHITE)
    IO = ("IO", Fore.BLUE)

    def __init__(self, name: str, color: str):
        self.category_name = name
        self.color = color


class SimLogger:
    """Console logger for the simulator, optionally mirrored to a log file"""

    def __init__(
        self,
        name: str = "NearFarCodebook",
        level: LogLevel = LogLevel.INFO,
        display_enabled: bool = True,
        log_file: Optional[str] = None,
    ):
        self.name = name
        self.level = level
        self.display_enabled = display_enabled
        self.log_file = log_file
        self._setup_python_logger()

    def _setup_python_logger(self):
        """Setup Python's built-in logger for file logging"""
        self.python_logger = logging.getLogger(self.name)
        self.python_logger.setLevel(self.level.level)
        self.python_logger.propagate = False

        if self.log_file and not self.python_logger.handlers:
            handler = logging.FileHandler(self.log_file)
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            self.python_logger.addHandler(handler)

    def set_level(self, level: LogLevel):
        self.level = level
        self.python_logger.setLevel(level.level)

    def _get_timestamp(self) -> str:
        """Get formatted timestamp"""
        return datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    def _format_message(self, level: LogLevel, category: LogCategory, message: str, details: Optional[str] = None) -> str:
        """Format log message with colors and structure"""
        timestamp = self._get_timestamp()

        if self.display_enabled:
            formatted = (
                f"{Style.BRIGHT}{timestamp}{Style.RESET_ALL} "
                f"[{level.color}{level.level_name}{Style.RESET_ALL}] "
                f"[{category.color}{category.category_name}{Style.RESET_ALL}] "
                f"{message}"
            )
            if details:
                formatted += f" - {Fore.WHITE}{details}{Style.RESET_ALL}"
        else:
            formatted = f"{timestamp} [{level.level_name}] [{category.category_name}] {message}"
            if details:
                formatted += f" - {details}"

        return formatted

    def _log(self, level: LogLevel, category: LogCategory, message: str, details: Optional[str] = None):
        """Internal logging method"""
        if level.level < self.level.level:
            return

        print(self._format_message(level, category, message, details), file=sys.stderr)

        if self.python_logger.handlers:
            plain_message = f"[{category.category_name}] {message}"
            if details:
                plain_message += f" - {details}"
            self.python_logger.log(level.level, plain_message)

    # System logging methods
    def system_info(self, message: str, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.SYSTEM, message, details)

    def system_error(self, message: str, details: Optional[str] = None):
        self._log(LogLevel.ERROR, LogCategory.SYSTEM, message, details)

    # Configuration logging methods
    def config_loaded(self, message: str, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.CONFIG, message, details)

    def config_error(self, message: str, details: Optional[str] = None):
        self._log(LogLevel.ERROR, LogCategory.CONFIG, message, details)

    # Codebook logging methods
    def codebook_iteration(self, iteration: int, nmse: float, details: Optional[str] = None):
        """Log one K-SVD iteration"""
        self._log(LogLevel.DEBUG, LogCategory.CODEBOOK, f"Iteration {iteration}: NMSE {nmse:.3e}", details)

    def codebook_trained(self, iterations: int, nmse: float, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.CODEBOOK, f"Trained in {iterations} iterations, NMSE {nmse:.3e}", details)

    # Experiment logging methods
    def scenario_start(self, scenario_id: str, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.EXPERIMENT, f"Running scenario {scenario_id}", details)

    def scenario_complete(self, scenario_id: str, rows: int, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.EXPERIMENT, f"Scenario {scenario_id} completed: {rows} rows", details)

    def trial_error(self, trial_index: int, error: str, details: Optional[str] = None):
        self._log(LogLevel.ERROR, LogCategory.EXPERIMENT, f"Trial {trial_index} failed: {error}", details)

    # IO logging methods
    def file_written(self, path: str, details: Optional[str] = None):
        self._log(LogLevel.INFO, LogCategory.IO, f"Wrote {path}", details)

    # Generic logging methods
    def debug(self, message: str, category: LogCategory = LogCategory.SYSTEM, details: Optional[str] = None):
        self._log(LogLevel.DEBUG, category, message, details)

    def info(self, message: str, category: LogCategory = LogCategory.SYSTEM, details: Optional[str] = None):
        self._log(LogLevel.INFO, category, message, details)

    def warning(self, message: str, category: LogCategory = LogCategory.SYSTEM, details: Optional[str] = None):
        self._log(LogLevel.WARNING, category, message, details)

    def error(self, message: str, category: LogCategory = LogCategory.SYSTEM, details: Optional[str] = None):
        self._log(LogLevel.ERROR, category, message, details)

    def critical(self, message: str, category: LogCategory = LogCategory.SYSTEM, details: Optional[str] = None):
        self._log(LogLevel.CRITICAL, category, message, details)


# Global logger instance
logger = SimLogger(
    level=LogLevel.from_name(os.getenv("NFC_LOG_LEVEL")),
    display_enabled=os.getenv("NFC_LOG_COLOR", "1") != "0",
    log_file=os.getenv("NFC_LOG_FILE") or None,
)
