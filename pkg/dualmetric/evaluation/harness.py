"""Cross-validation and experiment drivers (overlap ablation, sweeps, mode comparisons)"""

import logging
import math
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from dualmetric.core.config import settings
from dualmetric.core.errors import DataValidationError
from dualmetric.evaluation.metrics import evaluate_domain
from dualmetric.learning.trainer import DualTrainerState, train
from dualmetric.models.dataset import DomainDataset, OverlapRegistry, SubsampleMode, SyntheticConfig
from dualmetric.models.report import METRIC_DIRECTIONS, AblationCurve, CrossValResult, CurvePoint, MetricsReport
from dualmetric.models.training import FeatureMode, TrainConfig
from dualmetric.storage import files
from dualmetric.storage.dataset_ops import apply_edit_plan, kfold_split, subsample_overlap
from dualmetric.storage.synthetic import generate_synthetic_pair

logger = logging.getLogger(__name__)

DEFAULT_DIMS = (4, 8, 16, 32, 64, 128, 256)
DEFAULT_SIZES = (100, 1_000, 10_000, 100_000, 1_000_000)

# x codes of the two-variant comparisons
FEATURE_MODE_X = {FeatureMode.FEATURES: 0.0, FeatureMode.IDS_ONLY: 1.0}
TRANSFER_X = {False: 0.0, True: 1.0}


class Cell(NamedTuple):
    """One independent (x, seed) run of a sweep"""

    x: float
    seed: int
    data_a: DomainDataset
    data_b: DomainDataset
    registry: OverlapRegistry
    cfg: TrainConfig
    folds: int = settings.FOLDS
    eval_folds: int = 1


def split_pair(
    data_a: DomainDataset, data_b: DomainDataset, folds: int, fold: int, seed: int
) -> tuple[DomainDataset, DomainDataset, DomainDataset, DomainDataset]:
    """(train_a, test_a, train_b, test_b) of one fold; both domains split with the same seed"""
    train_a, test_a = kfold_split(data_a, folds, seed)[fold]
    train_b, test_b = kfold_split(data_b, folds, seed)[fold]
    return train_a, test_a, train_b, test_b


def evaluate_pair(
    state: DualTrainerState, test_a: DomainDataset, test_b: DomainDataset
) -> tuple[MetricsReport, MetricsReport]:
    return evaluate_domain(state, "a", test_a), evaluate_domain(state, "b", test_b)


def run_fold(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    cfg: TrainConfig,
    folds: int = settings.FOLDS,
    fold: int = 0,
) -> tuple[DualTrainerState, tuple[MetricsReport, MetricsReport], float]:
    """
    Train on all but one fold and evaluate on it.

    Returns:
        Trained state, (report A, report B) and training wall-clock seconds
    """
    train_a, test_a, train_b, test_b = split_pair(data_a, data_b, folds, fold, cfg.seed)
    started = time.perf_counter()
    state = train(train_a, train_b, registry, cfg)
    seconds = time.perf_counter() - started
    return state, evaluate_pair(state, test_a, test_b), seconds


def average_reports(fold_reports: Sequence[Sequence[MetricsReport]]) -> tuple[MetricsReport, ...]:
    """Per-domain mean of each metric over folds; ``n_test`` is the total over folds"""
    averaged = []
    for column in zip(*fold_reports):
        first = column[0]
        averaged.append(
            MetricsReport(
                domain=first.domain,
                rmse=float(np.mean([r.rmse for r in column])),
                mae=float(np.mean([r.mae for r in column])),
                precision_at_k=float(np.mean([r.precision_at_k for r in column])),
                recall_at_k=float(np.mean([r.recall_at_k for r in column])),
                k=first.k,
                n_test=sum(r.n_test for r in column),
            )
        )
    return tuple(averaged)


def run_cell(cell: Cell) -> CurvePoint:
    """
    Train/evaluate one sweep cell (module level so worker processes can import it).

    Folds ``0 .. eval_folds - 1`` of a ``folds``-way split are run; the point
    carries their metric means and the mean training time. With the default
    ``eval_folds=1`` only fold 0 is used.
    """
    cfg = cell.cfg.model_copy(update={"seed": cell.seed})
    fold_reports = []
    seconds = []
    for fold in range(max(1, min(cell.eval_folds, cell.folds))):
        _, reports, elapsed = run_fold(cell.data_a, cell.data_b, cell.registry, cfg, cell.folds, fold)
        fold_reports.append(reports)
        seconds.append(elapsed)
    reports = average_reports(fold_reports)
    logger.info(
        "Cell x=%s seed=%d folds=%d: rmse_a=%.6g rmse_b=%.6g seconds=%.3f",
        cell.x,
        cell.seed,
        len(fold_reports),
        reports[0].rmse,
        reports[1].rmse,
        float(np.mean(seconds)),
    )
    return CurvePoint(x=cell.x, seed=cell.seed, reports=reports, seconds=float(np.mean(seconds)))


def run_cells(cells: Sequence[Cell], jobs: int = 1) -> list[CurvePoint]:
    """
    Run independent cells, in a process pool when ``jobs`` > 1.

    Results come back in cell order whatever the pool size.
    """
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


def _curve(name: str, points: Iterable[CurvePoint]) -> AblationCurve:
    return AblationCurve(name=name, points=tuple(sorted(points, key=lambda p: (p.x, p.seed))))


def _summary(fold_reports: Sequence[Sequence[MetricsReport]], statistic) -> dict[str, dict[str, float]]:
    domains = [r.domain for r in fold_reports[0]]
    return {
        domain: {
            metric: float(statistic([r.metric(metric) for fold in fold_reports for r in fold if r.domain == domain]))
            for metric in METRIC_DIRECTIONS
        }
        for domain in domains
    }


def crossval(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    cfg: TrainConfig,
    folds: int = settings.FOLDS,
) -> CrossValResult:
    """
    k-fold cross-validation of the dual pipeline.

    Fold assignment depends only on ``cfg.seed``. Per-fold reports are kept for
    paired significance tests.
    """
    fold_reports = []
    for fold in range(folds):
        _, reports, seconds = run_fold(data_a, data_b, registry, cfg, folds, fold)
        logger.info("Fold %d/%d done in %.3fs: rmse_a=%.6g rmse_b=%.6g", fold + 1, folds, seconds, reports[0].rmse, reports[1].rmse)
        fold_reports.append(reports)

    def sample_std(values) -> float:
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    return CrossValResult(
        fold_reports=tuple(fold_reports),
        mean=_summary(fold_reports, np.mean),
        std=_summary(fold_reports, sample_std),
    )


def ablate_overlap(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    counts: Sequence[int],
    mode: SubsampleMode,
    seeds: Sequence[int],
    cfg: TrainConfig,
    jobs: int = 1,
    eval_folds: int = 1,
) -> AblationCurve:
    """
    Metrics as a function of the number of linked overlap users.

    For each count and seed the registry is thinned with ``subsample_overlap``
    and the edit is applied to the data before the fold split. A count equal to
    the registry size leaves the data untouched.

    Raises:
        DataValidationError: If a count exceeds the available overlap
    """
    too_large = [n for n in counts if n > len(registry)]
    if too_large:
        raise DataValidationError(f"counts {too_large} exceed the {len(registry)} available overlap users")
    cells = []
    for count in sorted(counts):
        for seed in seeds:
            thinned, plan = subsample_overlap(registry, count, mode, seed)
            edited_a, edited_b = apply_edit_plan(data_a, data_b, plan)
            cells.append(Cell(float(count), seed, edited_a, edited_b, thinned, cfg, eval_folds=eval_folds))
    return _curve("overlap", run_cells(cells, jobs))


def with_latent_dim(cfg: TrainConfig, dim: int) -> TrainConfig:
    return cfg.model_copy(update={"autoencoder": cfg.autoencoder.model_copy(update={"latent_dim": dim})})


def sweep_dimension(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    dims: Sequence[int] = DEFAULT_DIMS,
    seeds: Sequence[int] = (0,),
    cfg: Optional[TrainConfig] = None,
    jobs: int = 1,
    eval_folds: int = 1,
) -> AblationCurve:
    """Retrain embeddings and the whole pipeline for each embedding dimension"""
    cfg = cfg or TrainConfig()
    cells = [
        Cell(float(dim), seed, data_a, data_b, registry, with_latent_dim(cfg, dim), eval_folds=eval_folds)
        for dim in sorted(dims)
        for seed in seeds
    ]
    return _curve("dimension", run_cells(cells, jobs))


def synthetic_for_size(records: int, base: SyntheticConfig, seed: int) -> SyntheticConfig:
    """
    Synthetic config whose two domains hold about ``records`` ratings in total.

    Users are added to reach the size; ratings per user and items stay fixed.
    """
    per_domain = max(1, records // 2)
    ratings_per_user = min(base.ratings_per_user, base.items_per_domain, per_domain)
    users = max(1, math.ceil(per_domain / ratings_per_user))
    return base.model_copy(
        update={
            "users_per_domain": users,
            "ratings_per_user": ratings_per_user,
            "overlap_count": min(base.overlap_count, users),
            "seed": seed,
        }
    )


def sweep_scalability(
    sizes: Sequence[int] = DEFAULT_SIZES,
    seeds: Sequence[int] = (0,),
    cfg: Optional[TrainConfig] = None,
    synthetic: Optional[SyntheticConfig] = None,
    max_records: int = settings.MAX_RECORDS,
    jobs: int = 1,
    eval_folds: int = 1,
) -> AblationCurve:
    """
    Training wall-clock time against data size on synthetic domain pairs.

    Sizes above ``max_records`` are skipped.
    """
    cfg = cfg or TrainConfig()
    synthetic = synthetic or SyntheticConfig()
    kept = sorted(size for size in sizes if size <= max_records)
    skipped = sorted(set(sizes) - set(kept))
    if skipped:
        logger.warning("Skipping sizes above max_records=%d: %s", max_records, skipped)
    if not kept:
        raise DataValidationError(f"no size is within max_records={max_records}")
    cells = []
    for size in kept:
        for seed in seeds:
            pair = generate_synthetic_pair(synthetic_for_size(size, synthetic, seed))
            cells.append(
                Cell(float(size), seed, pair.domain_a, pair.domain_b, pair.registry, cfg, eval_folds=eval_folds)
            )
    return _curve("scalability", run_cells(cells, jobs))


def scaling_exponent(curve: AblationCurve) -> float:
    """
    Slope of log(seconds) against log(x), seeds averaged.

    Raises:
        DataValidationError: With fewer than two distinct x values
    """
    xs = curve.x_values
    if len(xs) < 2:
        raise DataValidationError("need at least two sizes to fit an exponent")
    seconds = [np.mean([p.seconds for p in curve.points if p.x == x]) for x in xs]
    slope, _ = np.polyfit(np.log(xs), np.log(np.maximum(seconds, 1e-9)), 1)
    return float(slope)


def feature_mode_comparison(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    cfg: TrainConfig,
    seeds: Sequence[int] = (0,),
    jobs: int = 1,
    eval_folds: int = 1,
) -> AblationCurve:
    """Same splits and seeds with explicit features (x=0) and with ids only (x=1)"""
    cells = [
        Cell(x, seed, data_a, data_b, registry, cfg.model_copy(update={"feature_mode": mode}), eval_folds=eval_folds)
        for mode, x in FEATURE_MODE_X.items()
        for seed in seeds
    ]
    return _curve("feature-mode", run_cells(cells, jobs))


def transfer_comparison(
    data_a: DomainDataset,
    data_b: DomainDataset,
    registry: OverlapRegistry,
    cfg: TrainConfig,
    seeds: Sequence[int] = (0,),
    jobs: int = 1,
    eval_folds: int = 1,
) -> AblationCurve:
    """Separately trained per-domain recommenders (x=0) against the dual pipeline (x=1)"""
    cells = [
        Cell(x, seed, data_a, data_b, registry, cfg.model_copy(update={"transfer": transfer}), eval_folds=eval_folds)
        for transfer, x in TRANSFER_X.items()
        for seed in seeds
    ]
    return _curve("transfer", run_cells(cells, jobs))


def seed_values(curve: AblationCurve, x: float, domain: str, metric: str) -> list[float]:
    """Metric per seed at ``x``, in seed order (for paired tests across seeds)"""
    points = sorted((p for p in curve.points if p.x == x), key=lambda p: p.seed)
    return [r.metric(metric) for p in points for r in p.reports if r.domain == domain]


def write_curve(curve: AblationCurve, path: Union[str, Path]) -> Path:
    """
    curve.csv: one row per (x, seed, domain, metric).

    Each value is the mean over the folds its cell evaluated (fold 0 only
    unless the cell asked for more); ``seconds`` is the mean training time.
    """
    rows = (
        [repr(p.x), p.seed, r.domain, metric, repr(r.metric(metric)), repr(p.seconds)]
        for p in curve.points
        for r in p.reports
        for metric in METRIC_DIRECTIONS
    )
    return files.write_csv(path, files.CURVE_HEADER, rows)


def write_metrics(runs: dict[str, Sequence[MetricsReport]], path: Union[str, Path]) -> Path:
    """metrics.csv: one row per (run, domain, metric)"""
    rows = (
        [run_id, r.domain, metric, repr(r.metric(metric))]
        for run_id, reports in runs.items()
        for r in reports
        for metric in METRIC_DIRECTIONS
    )
    return files.write_csv(path, files.METRICS_HEADER, rows)
