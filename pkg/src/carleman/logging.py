import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import structlog

# Registry of per-run loggers
_run_loggers: Dict[str, Any] = {}


def configure_logging():
    """Configure the base logging setup for the 'carleman' namespace."""
    log_level = os.getenv("CARLEMAN_LOG_LEVEL", "INFO").upper()
    log_level_int = getattr(logging, log_level, logging.INFO)

    logger = logging.getLogger("carleman")
    logger.setLevel(log_level_int)

    # Remove existing handlers to avoid duplicates
    logger.handlers = []

    # stdout carries command reports, so log records go to stderr
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(logging.Formatter("%(message)s"))
    stream_handler.setLevel(log_level_int)
    logger.addHandler(stream_handler)

    structlog.configure_once(
        processors=[
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.JSONRenderer(),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    return structlog.get_logger("carleman")


def get_run_logger(
    run_id: str, out_dir: Path, metadata: Optional[Dict[str, Any]] = None
):
    """Get or create a logger for one CLI run, writing a copy into its output directory."""
    if run_id in _run_loggers:
        return _run_loggers[run_id]

    std_logger = logging.getLogger("carleman")

    # One run file at a time
    std_logger.handlers = [
        h for h in std_logger.handlers if not isinstance(h, logging.FileHandler)
    ]

    out_dir.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(out_dir / "run.log")
    file_handler.setFormatter(logging.Formatter("%(message)s"))
    file_handler.setLevel(logging.DEBUG)
    std_logger.addHandler(file_handler)

    structlog_logger = structlog.get_logger("carleman")
    if metadata is None:
        metadata = {}
    structlog_logger = structlog_logger.bind(run_id=run_id, **metadata)

    _run_loggers[run_id] = structlog_logger
    return structlog_logger


def release_run_logger(run_id: str) -> None:
    """Detach the file handler of a finished run."""
    _run_loggers.pop(run_id, None)
    std_logger = logging.getLogger("carleman")
    for handler in [
        h for h in std_logger.handlers if isinstance(h, logging.FileHandler)
    ]:
        handler.close()
        std_logger.removeHandler(handler)


# Initialize the base logger
logger = configure_logging()
