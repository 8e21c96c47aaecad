"""Coupled multi-domain synthetic data with a planted orthogonal map"""

import logging

import numpy as np

from dualmetric.core.tensor import random_orthogonal
from dualmetric.models.dataset import (
    DomainDataset,
    FeatureVector,
    OverlapRegistry,
    RatingRecord,
    SyntheticConfig,
    SyntheticPair,
)
from dualmetric.models.mapping import OrthogonalMap

logger = logging.getLogger(__name__)


def project_rows_unit_ball(z: np.ndarray) -> np.ndarray:
    """Scale every row with norm above one back onto the unit sphere"""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.maximum(norms, 1.0)


def _draw_latents(rng: np.random.Generator, count: int, k: int) -> np.ndarray:
    return project_rows_unit_ball(rng.standard_normal((count, k)))


def _feature_map(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    """Random k x dim linear map; full row rank (invertible on the latent space) when dim >= k"""
    return rng.standard_normal((k, dim)) / np.sqrt(k)


def _features(ids: list[str], latents: np.ndarray, fmap: np.ndarray, noise: float, rng) -> dict[str, FeatureVector]:
    values = latents @ fmap
    if noise > 0:
        values = values + rng.normal(0.0, noise, size=values.shape)
    return {owner: FeatureVector(owner_id=owner, values=tuple(float(v) for v in row)) for owner, row in zip(ids, values)}


def _ratings(
    user_ids: list[str],
    item_ids: list[str],
    user_latents: np.ndarray,
    item_latents: np.ndarray,
    cfg: SyntheticConfig,
    rng: np.random.Generator,
) -> list[RatingRecord]:
    records = []
    timestamp = 0
    for row, uid in enumerate(user_ids):
        chosen = np.sort(rng.choice(len(item_ids), size=cfg.ratings_per_user, replace=False))
        scores = 0.5 + 0.5 * item_latents[chosen] @ user_latents[row]
        if cfg.noise_std > 0:
            scores = scores + rng.normal(0.0, cfg.noise_std, size=scores.shape)
        for col, score in zip(chosen, np.clip(scores, 0.0, 1.0)):
            timestamp += 1
            records.append(RatingRecord(user_id=uid, item_id=item_ids[col], rating=float(score), timestamp=timestamp))
    return records


def _domain(
    name: str,
    user_ids: list[str],
    item_ids: list[str],
    user_latents: np.ndarray,
    item_latents: np.ndarray,
    cfg: SyntheticConfig,
    rng: np.random.Generator,
) -> DomainDataset:
    ratings = _ratings(user_ids, item_ids, user_latents, item_latents, cfg, rng)
    user_fmap = _feature_map(rng, cfg.latent_dim, cfg.user_feature_dim)
    item_fmap = _feature_map(rng, cfg.latent_dim, cfg.item_feature_dim)
    return DomainDataset(
        domain_name=name,
        ratings=tuple(ratings),
        user_features=_features(user_ids, user_latents, user_fmap, cfg.feature_noise_std, rng),
        item_features=_features(item_ids, item_latents, item_fmap, cfg.feature_noise_std, rng),
        rating_scale=(0.0, 1.0),
    )


def generate_synthetic_chain(cfg: SyntheticConfig, n_domains: int = 2) -> tuple[list[DomainDataset], OverlapRegistry, list[OrthogonalMap], dict]:
    """
    Generate ``n_domains`` coupled domains along a chain of planted maps.

    Every user and item latent is drawn once in a shared frame (standard normal,
    projected into the unit ball). Domain j sees the frame through the rotation
    P_j = Q_{j-1,j} ... Q_{12}; consecutive maps Q are proper random orthogonal
    matrices. Users ``u00000 .. u{overlap-1}`` exist in every domain with the
    same id; the remaining users and all items are domain-specific. A rating is
    ``clamp(0.5 + 0.5 <user, item> + noise, 0, 1)`` for a random subset of
    ``ratings_per_user`` items. Explicit features are a per-domain random linear
    image of the latents plus ``feature_noise_std`` noise.

    Returns:
        Domains, the registry of shared users, the planted hop maps
        ``[Q_12, Q_23, ...]`` and the ground-truth latents per domain
    """
    rng = np.random.default_rng(cfg.seed)
    k = cfg.latent_dim
    hops = [random_orthogonal(k, rng, proper=True) for _ in range(n_domains - 1)]

    shared_latents = _draw_latents(rng, cfg.overlap_count, k)
    shared_ids = [f"u{i:05d}" for i in range(cfg.overlap_count)]

    domains, latents = [], {}
    frame = np.eye(k)
    for j in range(n_domains):
        if j > 0:
            frame = hops[j - 1] @ frame
        tag = chr(ord("a") + j)
        own_count = cfg.users_per_domain - cfg.overlap_count
        own_ids = [f"{tag}-u{i:05d}" for i in range(own_count)]
        own_latents = _draw_latents(rng, own_count, k)
        item_ids = [f"{tag}-i{i:05d}" for i in range(cfg.items_per_domain)]
        item_latents = _draw_latents(rng, cfg.items_per_domain, k)

        user_ids = shared_ids + own_ids
        # Row vectors: a latent z seen through the frame is (frame @ z), i.e. z @ frame.T
        user_latents = np.vstack([shared_latents, own_latents]) @ frame.T
        item_latents = item_latents @ frame.T
        domains.append(_domain(f"domain_{tag}", user_ids, item_ids, user_latents, item_latents, cfg, rng))
        latents[f"{tag}_users"] = dict(zip(user_ids, user_latents))
        latents[f"{tag}_items"] = dict(zip(item_ids, item_latents))

    registry = OverlapRegistry(pairs=tuple((uid, uid) for uid in shared_ids))
    maps = [OrthogonalMap(matrix=q) for q in hops]
    logger.info(
        "Generated %d synthetic domains: users=%d items=%d overlap=%d k=%d seed=%d",
        n_domains,
        cfg.users_per_domain,
        cfg.items_per_domain,
        cfg.overlap_count,
        k,
        cfg.seed,
    )
    return domains, registry, maps, latents


def generate_synthetic_pair(cfg: SyntheticConfig) -> SyntheticPair:
    """
    Two coupled domains whose shared users satisfy latent_B = Q latent_A exactly.

    Deterministic under ``cfg.seed``; see ``generate_synthetic_chain`` for the
    construction.
    """
    domains, registry, maps, latents = generate_synthetic_chain(cfg, n_domains=2)
    return SyntheticPair(
        domain_a=domains[0],
        domain_b=domains[1],
        registry=registry,
        planted_map=maps[0],
        latents=latents,
    )
