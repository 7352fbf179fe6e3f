"""
Logging for the packing toolkit.

Conventions:
- stdout belongs to result tables and --json documents; log records go to stderr
- library modules log solver progress and campaign steps at INFO, per-trial detail at DEBUG
- broken invariants (an infeasible final set, a non-monotone rule) are logged at WARNING
  or ERROR next to the report that carries them
- LOG_LEVEL picks the level once, when a module first asks for its logger
"""

import logging
import os
import sys
from typing import Dict

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_loggers: Dict[str, logging.Logger] = {}


def _level_from_env() -> int:
    return getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO)


def get_logger(name: str) -> logging.Logger:
    """
    Logger for one module, configured on first use.

    Args:
        name: Usually __name__ of the calling module

    Returns:
        logging.Logger: Logger with a single stderr handler

    Example:
        logger = get_logger(__name__)
        logger.info("LP solved in 12 pivots")
    """
    cached = _loggers.get(name)
    if cached is not None:
        return cached

    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(_level_from_env())
        logger.propagate = False

    _loggers[name] = logger
    return logger
