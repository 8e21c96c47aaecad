"""Dataset transformations: normalisation, overlap discovery, splitting, overlap thinning"""

import logging

import numpy as np

from dualmetric.core.errors import DataValidationError
from dualmetric.models.dataset import (
    DomainDataset,
    OverlapEditPlan,
    OverlapRegistry,
    RatingRecord,
    SubsampleMode,
)

logger = logging.getLogger(__name__)

# Suffix given to domain-B ids of unlinked overlap users
UNLINKED_SUFFIX = "#unlinked"


def normalize_ratings(ds: DomainDataset) -> DomainDataset:
    """
    Min-max normalise ratings to [0, 1] and record the scale as (0, 1).

    Idempotent on data whose declared scale already is (0, 1).

    Raises:
        DataValidationError: If a rating lies outside the declared scale
    """
    low, high = ds.rating_scale
    span = high - low
    normalized = []
    for record in ds.ratings:
        if not low <= record.rating <= high:
            raise DataValidationError(
                f"rating {record.rating} of user {record.user_id!r} item {record.item_id!r} "
                f"outside declared scale [{low}, {high}]"
            )
        normalized.append(record.model_copy(update={"rating": (record.rating - low) / span}))
    return ds.model_copy(update={"ratings": tuple(normalized), "rating_scale": (0.0, 1.0)})


def dedupe_latest(records: list[RatingRecord]) -> list[RatingRecord]:
    """Keep one record per (user, item): the one with the latest timestamp (last wins on ties)"""
    latest: dict[tuple[str, str], RatingRecord] = {}
    for record in records:
        key = (record.user_id, record.item_id)
        current = latest.get(key)
        if current is None or record.timestamp >= current.timestamp:
            latest[key] = record
    return list(latest.values())


def find_overlap(a: DomainDataset, b: DomainDataset) -> OverlapRegistry:
    """Users rated in both domains, linked by identical id, sorted by id"""
    shared = sorted(set(a.user_ids()) & set(b.user_ids()))
    return OverlapRegistry(pairs=tuple((uid, uid) for uid in shared))


def kfold_split(ds: DomainDataset, k: int, seed: int) -> list[tuple[DomainDataset, DomainDataset]]:
    """
    Split ratings into k (train, test) partitions.

    Ratings are shuffled with ``seed`` and cut into k folds whose sizes differ by
    at most one (earlier folds take the remainder).

    Raises:
        DataValidationError: If k < 2 or there are fewer ratings than folds
    """
    n = len(ds.ratings)
    if k < 2:
        raise DataValidationError(f"need at least 2 folds, got {k}")
    if n < k:
        raise DataValidationError(f"{n} ratings cannot fill {k} folds")

    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    partitions = []
    for test_positions in folds:
        test_mask = np.zeros(n, dtype=bool)
        test_mask[test_positions] = True
        train = [r for r, is_test in zip(ds.ratings, test_mask) if not is_test]
        test = [ds.ratings[int(p)] for p in np.sort(test_positions)]
        partitions.append((ds.with_ratings(train), ds.with_ratings(test)))
    return partitions


def holdout_split(ds: DomainDataset, fraction: float, seed: int) -> tuple[DomainDataset, DomainDataset]:
    """Random (kept, held-out) split with ``round(fraction * n)`` held-out ratings"""
    n = len(ds.ratings)
    n_out = int(round(fraction * n))
    if n_out == 0:
        return ds, ds.with_ratings([])
    order = np.random.default_rng(seed).permutation(n)
    held = np.zeros(n, dtype=bool)
    held[order[:n_out]] = True
    kept = [r for r, h in zip(ds.ratings, held) if not h]
    out = [r for r, h in zip(ds.ratings, held) if h]
    return ds.with_ratings(kept), ds.with_ratings(out)


def subsample_overlap(
    reg: OverlapRegistry,
    n: int,
    mode: SubsampleMode = SubsampleMode.UNLINK,
    seed: int = 0,
) -> tuple[OverlapRegistry, OverlapEditPlan]:
    """
    Keep n overlap pairs chosen uniformly at random.

    Args:
        reg: Full registry
        n: Pairs to keep
        mode: ``unlink`` keeps the dropped users' ratings as separate per-domain
            users; ``discard`` deletes their records from both domains
        seed: Selection seed

    Returns:
        Thinned registry and the edit plan to apply with ``apply_edit_plan``

    Raises:
        DataValidationError: If n is negative or larger than the registry
    """
    if not 0 <= n <= len(reg):
        raise DataValidationError(f"cannot keep {n} of {len(reg)} overlap pairs")
    chosen = np.sort(np.random.default_rng(seed).choice(len(reg), size=n, replace=False))
    keep = set(int(i) for i in chosen)
    retained = tuple(pair for i, pair in enumerate(reg.pairs) if i in keep)
    dropped = tuple(pair for i, pair in enumerate(reg.pairs) if i not in keep)
    logger.debug("Overlap subsampled: kept=%d dropped=%d mode=%s", len(retained), len(dropped), mode.value)
    return OverlapRegistry(pairs=retained), OverlapEditPlan(mode=mode, retained=retained, dropped=dropped)


def apply_edit_plan(
    a: DomainDataset, b: DomainDataset, plan: OverlapEditPlan
) -> tuple[DomainDataset, DomainDataset]:
    """
    Apply an overlap edit plan to a dataset pair.

    In unlink mode the domain-B side of every dropped pair is renamed so the two
    records no longer share an id; in discard mode both sides lose all ratings.
    """
    if not plan.dropped:
        return a, b
    dropped_a = {pair[0] for pair in plan.dropped}
    dropped_b = {pair[1] for pair in plan.dropped}

    if plan.mode == SubsampleMode.DISCARD:
        new_a = _without_users(a, dropped_a)
        new_b = _without_users(b, dropped_b)
        return new_a, new_b

    renamed = {uid: f"{uid}{UNLINKED_SUFFIX}" for uid in dropped_b}
    ratings = tuple(
        r.model_copy(update={"user_id": renamed[r.user_id]}) if r.user_id in renamed else r for r in b.ratings
    )
    user_features = {}
    for uid, fv in b.user_features.items():
        new_id = renamed.get(uid, uid)
        user_features[new_id] = fv if new_id == uid else fv.model_copy(update={"owner_id": new_id})
    return a, b.model_copy(update={"ratings": ratings, "user_features": user_features})


def _without_users(ds: DomainDataset, users: set[str]) -> DomainDataset:
    ratings = tuple(r for r in ds.ratings if r.user_id not in users)
    user_features = {uid: fv for uid, fv in ds.user_features.items() if uid not in users}
    return ds.model_copy(update={"ratings": ratings, "user_features": user_features})
