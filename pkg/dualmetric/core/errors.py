"""Exception hierarchy with machine-parsable reason codes"""

from pathlib import Path
from typing import Any, Optional


class DMLError(Exception):
    """Base class for every error the package raises on purpose"""

    reason = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ShapeError(DMLError, ValueError):
    """Operand dimensions do not match"""

    reason = "shape-mismatch"


class DegenerateInputError(DMLError, ValueError):
    """Input is numerically rank-deficient"""

    reason = "degenerate-input"


class DataValidationError(DMLError, ValueError):
    """Input violates a documented precondition"""

    reason = "invalid-input"


class ParseError(DMLError, ValueError):
    """Malformed input file"""

    reason = "parse-error"

    def __init__(self, message: str, path: Optional[str | Path] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class NumericDivergenceError(DMLError, ArithmeticError):
    """A loss or parameter became NaN or infinite"""

    reason = "numeric-divergence"

    def __init__(
        self,
        message: str,
        phase: Optional[str] = None,
        epoch: Optional[int] = None,
        batch: Optional[int] = None,
    ):
        context = [f"{name}={value}" for name, value in (("phase", phase), ("epoch", epoch), ("batch", batch)) if value is not None]
        super().__init__(f"{message} ({', '.join(context)})" if context else message)
        self.phase = phase
        self.epoch = epoch
        self.batch = batch


class SingularMixingError(DMLError, ZeroDivisionError):
    """Mixing weight makes 1 - 2*alpha vanish"""

    reason = "singular-mixing"


class ConditionViolationError(DMLError):
    """Dual factorization convergence conditions do not hold"""

    def __init__(self, message: str, report: Any = None, condition: str = "a"):
        super().__init__(message)
        self.report = report
        self.condition = condition

    @property
    def reason(self) -> str:  # type: ignore[override]
        return f"condition-{self.condition}-violated"


class InputNotFoundError(DMLError, FileNotFoundError):
    """A referenced input path does not exist"""

    reason = "input-not-found"


class UnknownIdError(DMLError, KeyError):
    """User or item id is not known to the domain"""

    reason = "unknown-id"

    def __str__(self) -> str:
        return self.message


class MonotonicityError(DMLError):
    """An objective that must not increase went up"""

    reason = "monotonicity-violated"
