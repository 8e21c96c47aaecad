"""Evaluation report models"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Direction(str, Enum):
    """Whether smaller or larger metric values are better"""

    LOWER_BETTER = "lower_better"
    HIGHER_BETTER = "higher_better"


METRIC_DIRECTIONS = {
    "rmse": Direction.LOWER_BETTER,
    "mae": Direction.LOWER_BETTER,
    "precision_at_k": Direction.HIGHER_BETTER,
    "recall_at_k": Direction.HIGHER_BETTER,
}

# Tolerance for the RMSE >= MAE check (floating point)
METRIC_TOL = 1e-12


class MetricsReport(BaseModel):
    """Test metrics of one model on one domain"""

    model_config = ConfigDict(frozen=True)

    domain: str = Field(..., description="Domain label")
    rmse: float = Field(..., ge=0.0)
    mae: float = Field(..., ge=0.0)
    precision_at_k: float = Field(..., ge=0.0, le=1.0)
    recall_at_k: float = Field(..., ge=0.0, le=1.0)
    k: int = Field(5, ge=1, description="Ranking cutoff")
    n_test: int = Field(..., ge=1, description="Number of test ratings")

    @model_validator(mode="after")
    def validate_power_mean(self) -> "MetricsReport":
        """RMSE can never be below MAE"""
        if self.rmse + METRIC_TOL < self.mae:
            raise ValueError(f"rmse {self.rmse} below mae {self.mae}")
        return self

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


class CurvePoint(BaseModel):
    """One (x, seed) cell of an ablation or sweep"""

    model_config = ConfigDict(frozen=True)

    x: float = Field(..., description="Swept value: overlap count, dimension or record count")
    seed: int
    reports: tuple[MetricsReport, ...] = Field(..., description="One report per domain")
    seconds: float = Field(..., ge=0.0, description="Wall-clock training time")


class AblationCurve(BaseModel):
    """Per-x, per-seed metrics of a sweep"""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Sweep name, e.g. 'overlap'")
    points: tuple[CurvePoint, ...] = Field(default_factory=tuple)

    @model_validator(mode="after")
    def validate_points(self) -> "AblationCurve":
        """Points are sorted by x and each (x, seed) cell appears once"""
        xs = [p.x for p in self.points]
        if xs != sorted(xs):
            raise ValueError("curve points must be ordered by x")
        cells = [(p.x, p.seed) for p in self.points]
        if len(set(cells)) != len(cells):
            raise ValueError("duplicate (x, seed) cell")
        return self

    @property
    def x_values(self) -> list[float]:
        """Distinct swept values in increasing order"""
        return sorted({p.x for p in self.points})

    def mean_metric(self, x: float, domain: str, metric: str) -> float:
        """Seed-averaged metric at ``x`` for ``domain``"""
        values = [r.metric(metric) for p in self.points if p.x == x for r in p.reports if r.domain == domain]
        if not values:
            raise KeyError(f"no reports for x={x} domain={domain}")
        return sum(values) / len(values)


class SignificanceResult(BaseModel):
    """Two-sided paired t-test outcome"""

    model_config = ConfigDict(frozen=True)

    statistic: Optional[float] = Field(None, description="t statistic, None when differences are all zero")
    p_value: float = Field(..., ge=0.0, le=1.0)
    significant: bool = Field(..., description="p_value < 1 - level")
    level: float = Field(0.95)


class CrossValResult(BaseModel):
    """Per-fold reports of one pipeline plus their mean and standard deviation"""

    model_config = ConfigDict(frozen=True)

    fold_reports: tuple[tuple[MetricsReport, ...], ...] = Field(..., description="Per fold, one report per domain")
    mean: dict[str, dict[str, float]] = Field(..., description="domain -> metric -> mean over folds")
    std: dict[str, dict[str, float]] = Field(..., description="domain -> metric -> sample std over folds")

    def per_fold(self, domain: str, metric: str) -> list[float]:
        """Metric values across folds, in fold order"""
        return [r.metric(metric) for fold in self.fold_reports for r in fold if r.domain == domain]
