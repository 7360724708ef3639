"""
Logging helpers.
"""

import logging
from typing import Optional

from utils.utils import get_log_level

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure the root logger once for command-line use.

    Args:
        level: Level name; defaults to PBDR_LOG_LEVEL
    """
    logging.basicConfig(level=(level or get_log_level()).upper(), format=LOG_FORMAT)


def get_logger(name: str) -> logging.Logger:
    """Return the logger for a module."""
    return logging.getLogger(name)
