"""
Logging for the message-passing lab

All modules log under the "mplab" root. Console output goes to stderr so
rich tables on stdout stay clean; an optional per-command log file keeps
the DEBUG cross-checks (Dirichlet edge-sum form, per-edge LMGC form) out
of the terminal. numpy floating-point warnings from long traces are routed
into the same handlers.
"""
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

from .errors import ConfigError

ROOT_LOGGER = "mplab"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _env(name: str, default: str) -> str:
    return os.getenv(name, default).split('#')[0].strip()


def _level(name: str, source: str) -> int:
    name = name.upper()
    if name not in LEVELS:
        raise ConfigError(f"{source} must be one of {', '.join(LEVELS)}, got {name!r}")
    return getattr(logging, name)


def setup_logging(log_level: str | None = None, log_to_file: bool | None = None, log_dir: str | None = None,
                  console_level: str | None = None, run_name: str | None = None) -> logging.Logger:
    """
    Configure the "mplab" logger.

    Args:
        log_level: DEBUG..CRITICAL; defaults to LOG_LEVEL from the environment
        log_to_file: also write a log file; defaults to LOG_TO_FILE (false)
        log_dir: directory for log files; defaults to LOG_DIR
        console_level: separate threshold for stderr (``--quiet`` passes WARNING)
        run_name: command name used in the log file name

    Raises:
        ConfigError: unknown level name
    """
    if log_level is None:
        log_level = _env("LOG_LEVEL", "INFO")
    if log_to_file is None:
        log_to_file = _env("LOG_TO_FILE", "false").lower() == "true"
    if log_dir is None:
        log_dir = _env("LOG_DIR", "logs")
    level = _level(log_level, "LOG_LEVEL")
    console = _level(console_level, "console level") if console_level else level

    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(level)
    logger.handlers.clear()
    formatter = logging.Formatter(FORMAT, datefmt='%Y-%m-%d %H:%M:%S')

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(console)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_to_file:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = Path(log_dir) / f"mplab_{run_name or 'run'}_{timestamp}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        logger.info(f"Logging to file: {log_file}")

    # overflow/invalid RuntimeWarnings from numpy become "py.warnings" records
    logging.captureWarnings(True)
    warnings_logger = logging.getLogger("py.warnings")
    warnings_logger.handlers[:] = list(logger.handlers)
    warnings_logger.propagate = False

    return logger


def get_logger(name: str | None = None) -> logging.Logger:
    """Get a logger instance with the specified name"""
    if name:
        return logging.getLogger(f"{ROOT_LOGGER}.{name}")
    return logging.getLogger(ROOT_LOGGER)
