"""Tests for log and error-message formatting"""

import logging
import sys

import pytest

from dualmetric.core.errors import DMLError, InputNotFoundError, NumericDivergenceError, ParseError
from dualmetric.core.log_format import NumericFormatter, format_reason, format_value, log_metrics, single_line


def test_single_line_collapses_whitespace():
    """Test that newlines and runs of spaces become single spaces"""
    assert single_line("loss\n  went\t up ") == "loss went up"
    assert single_line(12) == "12"


@pytest.mark.parametrize(
    "value,expected",
    [
        (0.0123456789, "0.0123457"),
        (1234567.0, "1.23457e+06"),
        (3, "3"),
        (True, "true"),
        (float("nan"), "nan!"),
        (float("inf"), "inf!"),
        (float("-inf"), "-inf!"),
        ("two\nlines", "two lines"),
    ],
)
def test_format_value(value, expected):
    """Test rendering of log field values"""
    assert format_value(value) == expected


def test_format_reason_for_package_errors():
    """Test the machine-parsable reason of a package error"""
    assert format_reason(InputNotFoundError("no such\ndirectory")) == "reason=input-not-found detail=no such directory"
    assert format_reason(ParseError("bad rating", path="ratings.csv", line=3)) == (
        "reason=parse-error detail=ratings.csv:3: bad rating"
    )
    assert format_reason(DMLError("")) == "reason=error detail=-"


def test_format_reason_for_unexpected_errors():
    """Test that unexpected exceptions only expose their type"""
    assert format_reason(RuntimeError("internal details")) == "reason=internal-error detail=RuntimeError"


def test_divergence_message_names_location():
    """Test the phase, epoch and batch context of a divergence"""
    exc = NumericDivergenceError("loss is nan", phase="mapping", epoch=4, batch=2)
    assert exc.message == "loss is nan (phase=mapping, epoch=4, batch=2)"
    assert format_reason(exc).startswith("reason=numeric-divergence detail=loss is nan")


def test_numeric_formatter_single_line():
    """Test that the formatter keeps the message on one line"""
    formatter = NumericFormatter("%(levelname)s - %(message)s")
    record = logging.LogRecord("dualmetric", logging.INFO, __file__, 1, "epoch done\nL_A=%s", (0.5,), None)
    assert formatter.format(record) == "INFO - epoch done L_A=0.5"


def test_numeric_formatter_keeps_traceback():
    """Test that tracebacks stay below the collapsed message"""
    formatter = NumericFormatter("%(message)s")
    try:
        raise ValueError("boom")
    except ValueError:
        record = logging.LogRecord("dualmetric", logging.ERROR, __file__, 1, "failed\nhere", None, sys.exc_info())
    first, rest = formatter.format(record).split("\n", 1)
    assert first == "failed here"
    assert "ValueError: boom" in rest
    assert record.exc_info is not None


def test_log_metrics(caplog):
    """Test key=value formatting of metric log lines"""
    logger = logging.getLogger("dualmetric.test")
    with caplog.at_level(logging.INFO, logger="dualmetric.test"):
        log_metrics(logger, logging.INFO, "Epoch done", epoch=3, L_A=0.0123456789, val_A=float("nan"))
        log_metrics(logger, logging.INFO, "Plain")
        log_metrics(logger, logging.DEBUG, "Hidden", epoch=1)
    assert caplog.messages == ["Epoch done epoch=3 L_A=0.0123457 val_A=nan!", "Plain"]
