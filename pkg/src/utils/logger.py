"""
Logging utilities.
"""
import logging
import os
import sys
from datetime import datetime
from pathlib import Path


class _MaxLevelFilter(logging.Filter):
    """Let through records strictly below a level."""

    def __init__(self, level):
        super().__init__()
        self.level = level

    def filter(self, record):
        return record.levelno < self.level


def setup_logging(log_level="INFO", log_file=None):
    """
    Set up logging configuration.

    Progress messages go to stdout, warnings and errors to stderr.

    Args:
        log_level (str): Logging level
        log_file (str, optional): Log file path

    Returns:
        logger: Configured root logger
    """
    # Create logs directory if it doesn't exist
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

    log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Convert string log level to logging level
    numeric_level = getattr(logging, str(log_level).upper(), None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.addFilter(_MaxLevelFilter(logging.WARNING))
    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setLevel(logging.WARNING)
    handlers = [stdout_handler, stderr_handler]

    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=numeric_level,
        format=log_format,
        handlers=handlers,
        force=True
    )

    logger = logging.getLogger()

    # Drop empty messages
    for handler in logger.handlers:
        handler.addFilter(lambda record: record.getMessage() != "")

    logger.debug(f"Logging initialized with level {log_level}")

    return logger


def create_log_file_path(run_name="stnet", logs_dir="logs"):
    """
    Create a dated log file path.

    Args:
        run_name (str): Command or run name used as file prefix
        logs_dir (str): Directory holding log files

    Returns:
        str: Log file path
    """
    logs_dir = Path(logs_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)

    date_str = datetime.now().strftime("%Y%m%d")
    log_file = logs_dir / f"{run_name}_{date_str}.log"

    return str(log_file)
