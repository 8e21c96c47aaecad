"""Log and error-message formatting for numeric training output"""

import logging
import math
import re
from numbers import Real
from typing import Any

from dualmetric.core.errors import DMLError

# Significant digits used for floats in log lines
FLOAT_DIGITS = 6

# Markers for values that must never pass silently
NON_FINITE_MARKERS = {
    "nan": "nan!",
    "inf": "inf!",
    "-inf": "-inf!",
}

_WHITESPACE_RUN = re.compile(r"\s+")


class NumericFormatter(logging.Formatter):
    """Logging formatter that keeps every record on one line"""

    def format(self, record: logging.LogRecord) -> str:
        """Format record, collapsing newlines in the message body (tracebacks are kept)"""
        exc_text = None
        if record.exc_info:
            exc_text = self.formatException(record.exc_info)
        saved_exc_info, saved_exc_text = record.exc_info, record.exc_text
        record.exc_info, record.exc_text = None, None
        try:
            line = single_line(super().format(record))
        finally:
            record.exc_info, record.exc_text = saved_exc_info, saved_exc_text
        if exc_text:
            line = f"{line}\n{exc_text}"
        return line


def single_line(text: Any) -> str:
    """Collapse all whitespace runs (including newlines) to single spaces"""
    if not isinstance(text, str):
        text = str(text)
    return _WHITESPACE_RUN.sub(" ", text).strip()


def format_value(value: Any) -> str:
    """
    Render a value for a key=value log field.

    Floats use ``FLOAT_DIGITS`` significant digits; NaN and infinities get a
    trailing ``!`` so they stand out in long training logs.
    """
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, Real) and not isinstance(value, int):
        value = float(value)
        if not math.isfinite(value):
            return NON_FINITE_MARKERS[repr(value)]
        return f"{value:.{FLOAT_DIGITS}g}"
    return single_line(value)


def format_reason(exc: BaseException) -> str:
    """
    Build the one-line, machine-parsable reason printed by the CLI on failure.

    Args:
        exc: Raised exception

    Returns:
        ``reason=<code> detail=<text>``; unexpected exceptions get ``internal-error``
    """
    if isinstance(exc, DMLError):
        code = exc.reason
        detail = exc.message
    else:
        code = "internal-error"
        detail = type(exc).__name__
    return f"reason={code} detail={single_line(detail) or '-'}"


def log_metrics(logger: logging.Logger, level: int, message: str, **values: Any) -> None:
    """
    Log a message followed by formatted ``key=value`` fields.

    Usage:
        log_metrics(logger, logging.INFO, "epoch done", epoch=3, L_A=0.0123, val_A=0.21)
    """
    if not logger.isEnabledFor(level):
        return
    fields = " ".join(f"{key}={format_value(value)}" for key, value in values.items())
    if fields:
        logger.log(level, "%s %s", message, fields)
    else:
        logger.log(level, "%s", message)


def configure_logging(level: str | int = "INFO") -> None:
    """Configure root logging once, installing ``NumericFormatter`` on every handler"""
    log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    logging.basicConfig(
        level=level,
        format=log_format,
        handlers=[logging.StreamHandler()],
    )
    for handler in logging.root.handlers:
        handler.setFormatter(NumericFormatter(log_format))
