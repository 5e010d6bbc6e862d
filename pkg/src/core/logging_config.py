"""Centralized logging configuration for bifikle."""

import logging
import sys
from typing import Optional

ROOT_LOGGER = "bifikle"
WARNINGS_LOGGER = "py.warnings"


def _route_warnings(handler: logging.Handler) -> None:
    # numpy/scipy/sklearn warnings share the bifikle handler
    logging.captureWarnings(True)
    warnings_logger = logging.getLogger(WARNINGS_LOGGER)
    if handler not in warnings_logger.handlers:
        warnings_logger.addHandler(handler)


def setup_logging(level: str = "INFO", logger_name: str = ROOT_LOGGER,
                  capture_warnings: bool = True) -> logging.Logger:
    """
    Setup centralized logging configuration.

    Repeated calls keep the single stderr handler and only change levels.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        logger_name: Name of the logger
        capture_warnings: Route ``warnings.warn`` output through the same handler

    Returns:
        Configured logger instance
    """
    # Convert string level to logging constant
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    # Create logger
    logger = logging.getLogger(logger_name)
    logger.setLevel(numeric_level)

    # Avoid duplicate handlers
    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(numeric_level)
        return logger

    # stderr only; models eval prints JSON on stdout
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(numeric_level)

    # Create formatter
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    handler.setFormatter(formatter)

    logger.addHandler(handler)
    if capture_warnings:
        _route_warnings(handler)

    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Get a logger under the bifikle root; module names drop the ``src.`` prefix."""
    if not name:
        return logging.getLogger(ROOT_LOGGER)
    if name.startswith("src."):
        name = name[len("src."):]
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
