"""
Logger configuration for the PABF toolkit.

This module sets up the logging system for command-line runs.
"""

import logging
from logging.handlers import RotatingFileHandler

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logger(settings):
    """
    Configure the application logger.

    Sets up logging to the console and, when a log file is configured,
    to a rotating file with the same formatting.

    Args:
        settings: Settings object carrying log_level and log_file.
    """
    log_level_name = settings.log_level.upper()
    log_level = getattr(logging, log_level_name)

    logging.basicConfig(
        level=log_level,
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    if settings.log_file:
        file_handler = RotatingFileHandler(
            settings.log_file, maxBytes=10485760, backupCount=5
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(file_handler)

    logger = logging.getLogger(__name__)
    logger.debug("Logger initialized")
    logger.debug(f"Log level: {log_level_name}")
    if settings.log_file:
        logger.debug(f"Log file: {settings.log_file}")
