import logging
import sys
from typing import Any, Dict
from utils.config import get_settings

# Conditional import for structlog
try:
    import structlog
    STRUCTLOG_AVAILABLE = True
except ImportError:
    STRUCTLOG_AVAILABLE = False

settings = get_settings()

_configured = False

def setup_logging(level: str = None, json_output: bool = None):
    """Configure structured logging for the laboratory"""
    global _configured

    level_name = (level or settings.LOG_LEVEL).upper()
    if json_output is None:
        json_output = settings.LOG_JSON or settings.ENVIRONMENT == "production"

    if STRUCTLOG_AVAILABLE:
        renderer = (
            structlog.processors.JSONRenderer()
            if json_output
            else structlog.dev.ConsoleRenderer(colors=False)
        )
        structlog.configure(
            processors=[
                structlog.stdlib.filter_by_level,
                structlog.stdlib.add_logger_name,
                structlog.stdlib.add_log_level,
                structlog.stdlib.PositionalArgumentsFormatter(),
                structlog.processors.TimeStamper(fmt="iso"),
                structlog.processors.StackInfoRenderer(),
                structlog.processors.format_exc_info,
                structlog.processors.UnicodeDecoder(),
                renderer,
            ],
            context_class=dict,
            logger_factory=structlog.stdlib.LoggerFactory(),
            wrapper_class=structlog.stdlib.BoundLogger,
            cache_logger_on_first_use=True,
        )

    # Logs go to stderr so CSV/JSON written to stdout stays clean
    logging.basicConfig(
        format="%(message)s" if STRUCTLOG_AVAILABLE else settings.LOG_FORMAT,
        level=getattr(logging, level_name, logging.INFO),
        stream=sys.stderr,
        force=_configured,
    )
    logging.getLogger().setLevel(getattr(logging, level_name, logging.INFO))
    _configured = True

class LabLogger:
    """Logger wrapper carrying keyword context for numerical operations"""

    def __init__(self, name: str):
        self.name = name
        if STRUCTLOG_AVAILABLE:
            self.logger = structlog.get_logger(name)
        else:
            self.logger = logging.getLogger(name)

    def _emit(self, method: str, message: str, **kwargs):
        if STRUCTLOG_AVAILABLE:
            getattr(self.logger, method)(message, **kwargs)
        else:
            context = " ".join(f"{key}={value}" for key, value in kwargs.items())
            getattr(self.logger, method)(f"{message} {context}".strip())

    def info(self, message: str, **kwargs):
        """Log info message with context"""
        self._emit("info", message, **kwargs)

    def warning(self, message: str, **kwargs):
        """Log warning message with context"""
        self._emit("warning", message, **kwargs)

    def error(self, message: str, **kwargs):
        """Log error message with context"""
        self._emit("error", message, **kwargs)

    def debug(self, message: str, **kwargs):
        """Log debug message with context"""
        self._emit("debug", message, **kwargs)

    def log_computation(self, operation: str, **kwargs):
        """Log a completed numerical operation"""
        self._emit("debug", "Computation", operation=operation, **kwargs)

    def log_scan_progress(self, done: int, total: int, **kwargs):
        """Log progress of a parameter scan"""
        self._emit("info", "Scan progress", done=done, total=total, **kwargs)

    def log_error(self, error: Exception, context: Dict[str, Any] = None):
        """Log error with context"""
        self._emit(
            "error",
            "Error occurred",
            error=str(error),
            error_type=type(error).__name__,
            context=context or {},
        )

def get_logger(name: str) -> LabLogger:
    """Get a logger instance for a specific module"""
    return LabLogger(name)
