"""Structured logging configuration using structlog."""

import logging
import sys
from contextlib import AbstractContextManager
from typing import Any

import orjson
import structlog

from pofl_sim.config import Environment

# Numeric results often arrive as numpy scalars.
_JSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def _orjson_dumps(event: Any, **kwargs: Any) -> str:
    default = kwargs.get("default")
    return orjson.dumps(event, default=default, option=_JSON_OPTIONS).decode()


def setup_logging(env: Environment, log_level: str = "info") -> None:
    """Configure structlog for the simulator and the inspection service.

    Production renders one JSON object per line through orjson; other
    environments use the console renderer. Everything goes to stderr so
    command output on stdout stays machine-readable.
    """
    level = getattr(logging, log_level.upper(), logging.INFO)

    shared_processors: list[structlog.types.Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.UnicodeDecoder(),
    ]

    renderers: list[structlog.types.Processor]
    if env == Environment.PRODUCTION:
        renderers = [
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(serializer=_orjson_dumps),
        ]
    else:
        renderers = [structlog.dev.ConsoleRenderer()]

    structlog.configure(
        processors=[
            *shared_processors,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    formatter = structlog.stdlib.ProcessorFormatter(
        processors=[
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            *renderers,
        ],
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(level)

    for logger_name in ("aiosqlite", "uvicorn.access"):
        logging.getLogger(logger_name).setLevel(logging.WARNING)


def round_context(round_index: int, seed: int) -> AbstractContextManager[None]:
    """Bind the round index and scenario seed to every event logged inside."""
    return structlog.contextvars.bound_contextvars(round=round_index, seed=seed)
