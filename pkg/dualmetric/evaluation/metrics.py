"""Rating and ranking metrics, improvement percentages and paired significance"""

import logging
import math
from collections.abc import Mapping, Sequence
from typing import Union

import numpy as np
from scipy import stats

from dualmetric.core.config import settings
from dualmetric.core.errors import DataValidationError
from dualmetric.learning.trainer import DualTrainerState, predict_known
from dualmetric.models.dataset import DomainDataset
from dualmetric.models.report import Direction, MetricsReport, SignificanceResult
from dualmetric.storage.rating_table import RatingTable

logger = logging.getLogger(__name__)


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise DataValidationError(f"{pred.size} predictions for {truth.size} ratings")
    if pred.size == 0:
        raise DataValidationError("no predictions to score")
    return pred, truth


def rmse(pred, truth) -> float:
    """Root mean squared error"""
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    """Mean absolute error"""
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def top_k(scored: Sequence[tuple[str, float]], k: int) -> list[str]:
    """Item ids of the k highest scores, ties broken by ascending item id"""
    return [item for item, _ in sorted(scored, key=lambda pair: (-pair[1], pair[0]))[:k]]


def precision_recall_at_k(
    predictions: Mapping[str, Sequence[tuple[str, float]]],
    relevant: Mapping[str, set[str]],
    k: int = settings.TOP_K,
) -> tuple[float, float]:
    """
    User-averaged precision and recall at k.

    Args:
        predictions: user -> [(item, predicted score), ...] over that user's test items
        relevant: user -> relevant test items
        k: Cutoff

    Returns:
        (P@k, R@k); users with no relevant items are left out of the recall average

    Raises:
        DataValidationError: If k < 1 or there are no users
    """
    if k < 1:
        raise DataValidationError(f"k must be at least 1, got {k}")
    if not predictions:
        raise DataValidationError("no users to rank")

    precisions = []
    recalls = []
    for user, scored in predictions.items():
        wanted = relevant.get(user, set())
        hits = len(set(top_k(scored, k)) & wanted)
        precisions.append(hits / k)
        if wanted:
            recalls.append(hits / len(wanted))
    recall = sum(recalls) / len(recalls) if recalls else 0.0
    return sum(precisions) / len(precisions), recall


def improvement_pct(ours: float, baseline: float, direction: Union[Direction, str]) -> float:
    """
    Relative improvement of ``ours`` over ``baseline`` in percent.

    Raises:
        DataValidationError: If the baseline is zero
    """
    if baseline == 0:
        raise DataValidationError("baseline is zero")
    if Direction(direction) == Direction.LOWER_BETTER:
        return 100.0 * (baseline - ours) / baseline
    return 100.0 * (ours - baseline) / baseline


def paired_significance(ours: Sequence[float], baseline: Sequence[float], level: float = 0.95) -> SignificanceResult:
    """
    Two-sided paired t-test (e.g. across folds or seeds).

    Raises:
        DataValidationError: On unequal lengths or fewer than two pairs
    """
    if len(ours) != len(baseline):
        raise DataValidationError(f"{len(ours)} values paired with {len(baseline)}")
    if len(ours) < 2:
        raise DataValidationError("a paired test needs at least two pairs")
    diffs = np.asarray(ours, dtype=np.float64) - np.asarray(baseline, dtype=np.float64)
    if np.all(diffs == diffs[0]):
        # no variance in the differences: the statistic is undefined, or infinite for a constant shift
        if diffs[0] == 0:
            return SignificanceResult(statistic=None, p_value=1.0, significant=False, level=level)
        return SignificanceResult(statistic=math.copysign(math.inf, diffs[0]), p_value=0.0, significant=True, level=level)
    result = stats.ttest_rel(ours, baseline)
    p_value = float(result.pvalue)
    return SignificanceResult(
        statistic=float(result.statistic), p_value=p_value, significant=p_value < 1.0 - level, level=level
    )


def report_from_predictions(
    test: DomainDataset,
    pred,
    k: int = settings.TOP_K,
    threshold: float = settings.RELEVANCE_THRESHOLD,
) -> MetricsReport:
    """
    Metrics of predictions aligned with ``test.ratings``.

    A test item is relevant to its user when the true rating is at least ``threshold``.
    """
    table = RatingTable(test)
    pred, truth = _paired(pred, table.ratings)
    ranked: dict[str, list[tuple[str, float]]] = {}
    relevant: dict[str, set[str]] = {}
    for row in table.rated_user_rows():
        positions = table.positions_for_user(row)
        user = table.user_ids[row]
        ranked[user] = [(table.item_ids[table.items[p]], float(pred[p])) for p in positions]
        relevant[user] = {table.item_ids[table.items[p]] for p in positions if truth[p] >= threshold}
    precision, recall = precision_recall_at_k(ranked, relevant, k)
    return MetricsReport(
        domain=test.domain_name,
        rmse=rmse(pred, truth),
        mae=mae(pred, truth),
        precision_at_k=precision,
        recall_at_k=recall,
        k=k,
        n_test=int(pred.size),
    )


def evaluate_domain(
    state: DualTrainerState,
    domain: str,
    test: DomainDataset,
    k: int = settings.TOP_K,
    threshold: float = settings.RELEVANCE_THRESHOLD,
) -> MetricsReport:
    """
    Score a trained state's within-domain predictions on a test set.

    Test ratings whose user or item has no embedding (possible in ids_only
    mode) are skipped with a warning.

    Args:
        state: Trained dual state
        domain: Domain tag ('a'/'b') or name
        test: Normalised test ratings
        k: Ranking cutoff
        threshold: Relevance threshold on the normalised rating

    Raises:
        DataValidationError: If no test rating can be scored
    """
    users = [r.user_id for r in test.ratings]
    items = [r.item_id for r in test.ratings]
    mask, pred = predict_known(state, domain, users, items)
    skipped = int((~mask).sum())
    if skipped:
        logger.warning("Skipping %d test ratings of %s without embeddings", skipped, test.domain_name)
    if pred.size == 0:
        raise DataValidationError(f"no scorable test ratings in {test.domain_name!r}")
    scored = test.with_ratings([r for r, keep in zip(test.ratings, mask) if keep])
    return report_from_predictions(scored, pred, k, threshold)
