"""
Structured logging setup.

Logs are written to stderr so that CSV and JSON written to stdout stay clean.
"""

import logging
import sys

import structlog

from app.config import settings


def configure_logging(level: str = None, fmt: str = None) -> None:
    """Configure structlog for console or JSON output."""
    level_name = (level or settings.log_level or "INFO").upper()
    fmt = (fmt or settings.log_format or "console").lower()
    numeric_level = getattr(logging, level_name, logging.INFO)

    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
