"""Logging configuration for the MAAE toolkit."""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Mapping, Optional

from utils.constants import APP_NAME, APP_VERSION, LOG_FILE


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[Path] = None,
    context: Optional[Mapping[str, object]] = None,
) -> Path:
    """
    Configure logging with rotating file handler (1MB × 3 files) and console output.

    Args:
        level: Logging level (default: INFO)
        log_file: Log file path (default: ~/.maae/maae.log)
        context: Run details (command, precision, ...) written into the banner

    Returns:
        Path of the active log file
    """
    log_file = Path(log_file) if log_file else LOG_FILE
    log_file.parent.mkdir(parents=True, exist_ok=True)

    formatter = logging.Formatter(
        "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )

    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=1048576,
        backupCount=3,
        encoding="utf-8"
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    logging.info("=" * 60)
    logging.info(f"{APP_NAME} {APP_VERSION} - Logging initialized")
    logging.info(f"Log file: {log_file}")
    for key, value in (context or {}).items():
        logging.info(f"{key}: {value}")
    logging.info("=" * 60)
    return log_file
