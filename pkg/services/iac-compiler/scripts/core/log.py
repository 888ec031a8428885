"""
Logging setup shared by the CLI and helper scripts
"""

import logging
import os
import sys

import colorlog

LOG_FORMAT = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"
PLAIN_FORMAT = "%(levelname)-8s %(name)s: %(message)s"


def setup_logging(verbose: int = 0, quiet: bool = False) -> logging.Logger:
    """
    Configure the root logger to write to stderr

    Args:
        verbose: 0 = WARNING, 1 = INFO, 2+ = DEBUG
        quiet: Only show errors

    Returns:
        The root logger
    """
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING

    use_color = "NO_COLOR" not in os.environ and sys.stderr.isatty()
    handler = colorlog.StreamHandler(sys.stderr)
    if use_color:
        handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(PLAIN_FORMAT))

    root = logging.getLogger()
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(level)
    return root
