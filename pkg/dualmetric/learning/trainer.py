"""
Dual training loop.

Each epoch runs three phases in order: within-domain recommender training for
both domains, a mapping update on the overlap users, and cross-domain
recommender training through X (domain A) and X^T (domain B).
"""

import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from dualmetric.core.errors import DataValidationError, NumericDivergenceError, UnknownIdError
from dualmetric.core.log_format import log_metrics
from dualmetric.learning.embeddings import EmbeddingTable, embed_features, embed_ids_only
from dualmetric.learning.layers import make_generator, make_optimizer, to_tensor
from dualmetric.learning.mapping import alignment_loss, update_mapping
from dualmetric.learning.recommender import (
    RecommenderModel,
    new_recommender,
    predict_batch,
    recommender_from_tensors,
    recommender_tensors,
    train_cross_step,
    train_step,
)
from dualmetric.models.dataset import DomainDataset, EntityKind, OverlapRegistry
from dualmetric.models.mapping import OrthogonalMap
from dualmetric.models.training import HISTORY_HEADER, FeatureMode, LossRecord, TrainConfig
from dualmetric.storage.dataset_ops import holdout_split
from dualmetric.storage import files
from dualmetric.storage.rating_table import RatingTable

logger = logging.getLogger(__name__)

DOMAIN_TAGS = ("a", "b")

# Seed stream keys, one per random component of a run
_SEED_RS = 1
_SEED_EMBED = 2
_SEED_SPLIT = 3
_SEED_EPOCH = 4


def component_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit seed for one component of a seeded run"""
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


class IndexedRatings(NamedTuple):
    """Ratings of one domain as embedding-table rows"""

    users: torch.Tensor
    items: torch.Tensor
    ratings: torch.Tensor

    def __len__(self) -> int:
        return int(self.ratings.shape[0])


class DualTrainerState(BaseModel):
    """Recommenders, mapping, embedding tables and loss history of a dual run"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    domains: tuple[str, str] = Field(..., description="Domain names for tags a and b")
    rs_a: RecommenderModel
    rs_b: RecommenderModel
    mapping: OrthogonalMap
    users_a: EmbeddingTable
    items_a: EmbeddingTable
    users_b: EmbeddingTable
    items_b: EmbeddingTable
    epoch: int = Field(0, ge=0)
    history: list[LossRecord] = Field(default_factory=list)
    converged: bool = False
    autoencoder_history: dict[str, list[float]] = Field(default_factory=dict)
    _optimizers: dict[str, torch.optim.Optimizer] = PrivateAttr(default_factory=dict)

    def tag_of(self, domain: str) -> str:
        """Resolve a domain tag ('a'/'b') or domain name to its tag"""
        if domain in DOMAIN_TAGS:
            return domain
        for tag, name in zip(DOMAIN_TAGS, self.domains):
            if domain == name:
                return tag
        raise UnknownIdError(f"unknown domain {domain!r}")

    def recommender(self, domain: str) -> RecommenderModel:
        return self.rs_a if self.tag_of(domain) == "a" else self.rs_b

    def tables(self, domain: str) -> tuple[EmbeddingTable, EmbeddingTable]:
        """(user table, item table) of a domain"""
        if self.tag_of(domain) == "a":
            return self.users_a, self.items_a
        return self.users_b, self.items_b

    def trainable_params(self, domain: str) -> list[torch.Tensor]:
        return [p for table in self.tables(domain) for p in table.parameters()]

    def optimizer(self, domain: str, cfg: TrainConfig) -> torch.optim.Optimizer:
        """Persistent optimizer over a domain's recommender and trainable embeddings, created on first use"""
        tag = self.tag_of(domain)
        if tag not in self._optimizers:
            params = [*self.recommender(tag).parameters(), *self.trainable_params(tag)]
            self._optimizers[tag] = make_optimizer(params, cfg.optimizer, cfg.lr_rs)
        return self._optimizers[tag]


def _feature_table(ds: DomainDataset, kind: EntityKind, cfg: TrainConfig, seed: int):
    source = ds.user_features if kind == EntityKind.USER else ds.item_features
    ids = sorted(source)
    matrix = np.array([source[i].values for i in ids], dtype=np.float64)
    ae_cfg = cfg.autoencoder.model_copy(update={"seed": seed})
    return embed_features(ids, matrix, ae_cfg)


def build_embeddings(
    ds: DomainDataset, cfg: TrainConfig, seed: int
) -> tuple[EmbeddingTable, EmbeddingTable, dict[str, list[float]]]:
    """
    Embedding stage for one domain.

    In ``features`` mode one autoencoder per entity kind is trained on the
    domain's feature vectors and frozen. In ``ids_only`` mode free per-id
    embeddings are created and trained later together with the recommender.

    Raises:
        DataValidationError: If features are requested but the domain has none
    """
    if cfg.feature_mode == FeatureMode.IDS_ONLY:
        users, items = embed_ids_only(ds, cfg.latent_dim, seed)
        return users, items, {}
    if not ds.has_features:
        raise DataValidationError(f"domain {ds.domain_name!r} has no features; use feature_mode=ids_only")
    users, user_hist = _feature_table(ds, EntityKind.USER, cfg, component_seed(seed, 0))
    items, item_hist = _feature_table(ds, EntityKind.ITEM, cfg, component_seed(seed, 1))
    return users, items, {"user": user_hist, "item": item_hist}


def build_state(data_a: DomainDataset, data_b: DomainDataset, cfg: TrainConfig) -> DualTrainerState:
    """Embeddings, fresh recommenders and an identity map"""
    tables = {}
    ae_history = {}
    for index, (tag, ds) in enumerate(zip(DOMAIN_TAGS, (data_a, data_b))):
        users, items, hist = build_embeddings(ds, cfg, component_seed(cfg.seed, _SEED_EMBED, index))
        tables[tag] = (users, items)
        ae_history.update({f"{tag}_{kind}": values for kind, values in hist.items()})

    def recommender(index: int) -> RecommenderModel:
        return new_recommender(
            cfg.latent_dim, cfg.hidden_layers, cfg.dropout_rate, component_seed(cfg.seed, _SEED_RS, index)
        )

    return DualTrainerState(
        domains=(data_a.domain_name, data_b.domain_name),
        rs_a=recommender(0),
        rs_b=recommender(1),
        mapping=OrthogonalMap.identity(cfg.latent_dim),
        users_a=tables["a"][0],
        items_a=tables["a"][1],
        users_b=tables["b"][0],
        items_b=tables["b"][1],
        autoencoder_history=ae_history,
    )


def index_ratings(ds: DomainDataset, users: EmbeddingTable, items: EmbeddingTable) -> IndexedRatings:
    """
    Resolve a dataset's ratings to table rows.

    Raises:
        UnknownIdError: If a rated user or item has no embedding
    """
    table = RatingTable(ds, user_ids=users.ids, item_ids=items.ids)
    return IndexedRatings(
        users=torch.as_tensor(table.users, dtype=torch.long),
        items=torch.as_tensor(table.items, dtype=torch.long),
        ratings=to_tensor(table.ratings),
    )


def overlap_rows(state: DualTrainerState, registry: OverlapRegistry) -> tuple[torch.Tensor, torch.Tensor]:
    """Table rows of the overlap pairs that have embeddings in both domains"""
    known = [
        (a, b) for a, b in registry.pairs if a in state.users_a.index and b in state.users_b.index
    ]
    if len(known) < len(registry):
        logger.debug("Skipping %d overlap pairs without embeddings", len(registry) - len(known))
    return state.users_a.rows_of([a for a, _ in known]), state.users_b.rows_of([b for _, b in known])


def _batches(n: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n, generator=generator)
    for batch, start in enumerate(range(0, n, batch_size)):
        yield batch, order[start : start + batch_size]


def _rating_phase(
    state: DualTrainerState,
    tag: str,
    data: IndexedRatings,
    cfg: TrainConfig,
    generator: torch.Generator,
    epoch: int,
    phase: str,
    mapping: Optional[torch.Tensor] = None,
) -> float:
    """One pass over a domain's ratings; returns the mean pre-step loss"""
    if len(data) == 0:
        return 0.0
    model = state.recommender(tag)
    users, items = state.tables(tag)
    optimizer = state.optimizer(tag, cfg)
    total = 0.0
    for batch, rows in _batches(len(data), cfg.batch_size, generator):
        u = users(data.users[rows])
        i = items(data.items[rows])
        r = data.ratings[rows]
        try:
            if mapping is None:
                loss = train_step(model, u, i, r, cfg.lr_rs, generator=generator, phase=phase, optimizer=optimizer)
            else:
                # row form of X u is u X^T
                loss = train_cross_step(model, u @ mapping.T, i, r, cfg.lr_rs, generator=generator, optimizer=optimizer)
        except NumericDivergenceError:
            raise NumericDivergenceError("recommender loss is not finite", phase=phase, epoch=epoch, batch=batch) from None
        total += loss * len(rows)
        logger.debug("%s epoch %d batch %d loss %.6g", phase, epoch, batch, loss)
    return total / len(data)


def _mapping_phase(
    state: DualTrainerState, rows: tuple[torch.Tensor, torch.Tensor], cfg: TrainConfig, generator, epoch: int
) -> tuple[float, float]:
    """Gradient steps on the overlap pairs; returns mean per-pair primal and dual losses"""
    rows_a, rows_b = rows
    vectors_a = state.users_a.vectors()[rows_a.numpy()]
    vectors_b = state.users_b.vectors()[rows_b.numpy()]
    primal_sum = dual_sum = 0.0
    for batch, picked in _batches(len(rows_a), cfg.batch_size, generator):
        picked = picked.numpy()
        pairs = list(zip(vectors_a[picked], vectors_b[picked]))
        primal, dual = alignment_loss(state.mapping, pairs)
        if not (math.isfinite(primal) and math.isfinite(dual)):
            raise NumericDivergenceError("alignment loss is not finite", phase="mapping", epoch=epoch, batch=batch)
        state.mapping, _ = update_mapping(state.mapping, pairs, cfg.lr_map)
        primal_sum += primal
        dual_sum += dual
    return primal_sum / len(rows_a), dual_sum / len(rows_a)


def validation_rmse(state: DualTrainerState, domain: str, data: Optional[IndexedRatings]) -> float:
    """Within-domain RMSE on held-out ratings (0 when there are none)"""
    if data is None or len(data) == 0:
        return 0.0
    users, items = state.tables(domain)
    with torch.no_grad():
        predictions = predict_batch(state.recommender(domain), users(data.users), items(data.items))
    return float(np.sqrt(np.mean((predictions - data.ratings.numpy()) ** 2)))


def _as_indexed(data: Union[DomainDataset, IndexedRatings], state: DualTrainerState, tag: str) -> IndexedRatings:
    if isinstance(data, IndexedRatings):
        return data
    return index_ratings(data, *state.tables(tag))


def run_epoch(
    state: DualTrainerState,
    data_a: Union[DomainDataset, IndexedRatings],
    data_b: Union[DomainDataset, IndexedRatings],
    registry: OverlapRegistry,
    cfg: TrainConfig,
    validation: tuple[Optional[IndexedRatings], Optional[IndexedRatings]] = (None, None),
) -> DualTrainerState:
    """
    One dual epoch; models and map are updated in place and one loss record is appended.

    Batches and dropout masks are drawn from a generator seeded by
    (cfg.seed, epoch), so an epoch is a pure function of the state, the data
    and the config; the recommender optimizers persist in the state across
    epochs. With an empty registry the mapping phase is skipped and
    the cross-domain phase uses the current map. With ``cfg.transfer`` off
    both the mapping and the cross-domain phases are skipped.

    Raises:
        NumericDivergenceError: Naming the phase, epoch and batch that diverged
    """
    epoch = state.epoch + 1
    generator = make_generator(component_seed(cfg.seed, _SEED_EPOCH, epoch))
    indexed_a = _as_indexed(data_a, state, "a")
    indexed_b = _as_indexed(data_b, state, "b")

    # phase 1: within-domain
    l_a = _rating_phase(state, "a", indexed_a, cfg, generator, epoch, "within-domain-a")
    l_b = _rating_phase(state, "b", indexed_b, cfg, generator, epoch, "within-domain-b")

    l_oa = l_ob = l_astar = l_bstar = 0.0
    if cfg.transfer:
        # phase 2: mapping
        rows = overlap_rows(state, registry)
        if len(rows[0]) > 0:
            l_oa, l_ob = _mapping_phase(state, rows, cfg, generator, epoch)

        # phase 3: cross-domain, X fixed
        x = to_tensor(state.mapping.matrix)
        l_astar = _rating_phase(state, "a", indexed_a, cfg, generator, epoch, "cross-domain-a", mapping=x)
        l_bstar = _rating_phase(state, "b", indexed_b, cfg, generator, epoch, "cross-domain-b", mapping=x.T)

    record = LossRecord(
        epoch=epoch,
        L_A=l_a,
        L_B=l_b,
        L_oA=l_oa,
        L_oB=l_ob,
        L_Astar=l_astar,
        L_Bstar=l_bstar,
        val_A=validation_rmse(state, "a", validation[0]),
        val_B=validation_rmse(state, "b", validation[1]),
    )
    state.history.append(record)
    state.epoch = epoch
    log_metrics(
        logger,
        logging.INFO,
        f"Epoch {epoch}",
        L_A=record.L_A,
        L_B=record.L_B,
        L_oA=record.L_oA,
        L_oB=record.L_oB,
        L_Astar=record.L_Astar,
        L_Bstar=record.L_Bstar,
        val_A=record.val_A,
        val_B=record.val_B,
        ortho=state.mapping.orthogonality_error(),
    )
    return state


def has_converged(history: Sequence[Union[LossRecord, float]], eps: float) -> bool:
    """True iff the last two total training losses differ by less than ``eps``"""
    if len(history) < 2:
        return False

    def total(entry) -> float:
        return entry.total if isinstance(entry, LossRecord) else float(entry)

    return abs(total(history[-1]) - total(history[-2])) < eps


def train(
    data_a: DomainDataset, data_b: DomainDataset, registry: OverlapRegistry, cfg: TrainConfig
) -> DualTrainerState:
    """
    Full dual training run on two (normalised) training sets.

    A seeded ``cfg.validation_fraction`` of each domain's ratings is held out
    for reporting only. Runs epochs until ``has_converged`` or ``cfg.max_epochs``.
    """
    state = build_state(data_a, data_b, cfg)
    validation = []
    fitted = []
    for index, (tag, ds) in enumerate(zip(DOMAIN_TAGS, (data_a, data_b))):
        fit, held = holdout_split(ds, cfg.validation_fraction, component_seed(cfg.seed, _SEED_SPLIT, index))
        if len(fit.ratings) == 0:
            raise DataValidationError(f"domain {ds.domain_name!r} has no training ratings")
        fitted.append(index_ratings(fit, *state.tables(tag)))
        validation.append(index_ratings(held, *state.tables(tag)))

    logger.info(
        "Dual training: ratings_a=%d ratings_b=%d overlap=%d mode=%s transfer=%s seed=%d",
        len(fitted[0]),
        len(fitted[1]),
        len(registry),
        cfg.feature_mode.value,
        cfg.transfer,
        cfg.seed,
    )
    for _ in range(cfg.max_epochs):
        run_epoch(state, fitted[0], fitted[1], registry, cfg, validation=(validation[0], validation[1]))
        if has_converged(state.history, cfg.convergence_eps):
            state.converged = True
            break

    logger.info("Training finished: epochs=%d converged=%s", state.epoch, state.converged)
    return state


def predict_final(state: DualTrainerState, domain: str, user_id: str, item_id: str) -> float:
    """
    Within-domain prediction RS(W_u, W_i) for one (user, item) of a domain.

    Raises:
        UnknownIdError: If the domain, user or item is unknown
    """
    users, items = state.tables(domain)
    with torch.no_grad():
        u = users(users.rows_of([user_id]))
        i = items(items.rows_of([item_id]))
        return float(predict_batch(state.recommender(domain), u, i)[0])


def predict_known(
    state: DualTrainerState, domain: str, user_ids: Sequence[str], item_ids: Sequence[str]
) -> tuple[np.ndarray, np.ndarray]:
    """
    Batch within-domain predictions for pairs whose ids have embeddings.

    Returns:
        (mask of scored pairs, predictions for the masked pairs)
    """
    users, items = state.tables(domain)
    mask = np.array([u in users.index and i in items.index for u, i in zip(user_ids, item_ids)], dtype=bool)
    kept_users = [u for u, keep in zip(user_ids, mask) if keep]
    kept_items = [i for i, keep in zip(item_ids, mask) if keep]
    if not kept_users:
        return mask, np.empty(0)
    with torch.no_grad():
        predictions = predict_batch(
            state.recommender(domain), users(users.rows_of(kept_users)), items(items.rows_of(kept_items))
        )
    return mask, predictions


def write_history(history: Sequence[LossRecord], path: Union[str, Path]) -> None:
    files.write_csv(path, HISTORY_HEADER, (record.as_row() for record in history))


def save_checkpoint(state: DualTrainerState, directory: Union[str, Path]) -> Path:
    """
    Write recommenders, map, embeddings and history to a directory.

    Layout: ``rs_a.csv``, ``rs_b.csv`` (named tensors), ``mapping.txt``,
    ``embeddings_<tag>_<kind>.csv``, ``history.csv`` and ``state.csv``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files.write_tensors(recommender_tensors(state.rs_a), directory / "rs_a.csv")
    files.write_tensors(recommender_tensors(state.rs_b), directory / "rs_b.csv")
    files.write_mapping(state.mapping, directory / "mapping.txt")
    for tag in DOMAIN_TAGS:
        for kind, table in zip(("user", "item"), state.tables(tag)):
            files.write_embeddings(table.ids, table.vectors(), directory / f"embeddings_{tag}_{kind}.csv")
    write_history(state.history, directory / "history.csv")
    files.write_meta(
        {
            "domain_a": state.domains[0],
            "domain_b": state.domains[1],
            "epoch": state.epoch,
            "converged": str(state.converged).lower(),
        },
        directory / "state.csv",
    )
    logger.info("Checkpoint written to %s", directory)
    return directory


def load_checkpoint(directory: Union[str, Path]) -> DualTrainerState:
    """
    Rebuild a trained state (embedding tables frozen, history not restored).

    Raises:
        InputNotFoundError: If the directory or a checkpoint file is missing
    """
    directory = Path(directory)
    meta = files.read_meta(directory / "state.csv")
    tables = {}
    for tag in DOMAIN_TAGS:
        for kind in ("user", "item"):
            ids, vectors = files.read_embeddings(directory / f"embeddings_{tag}_{kind}.csv")
            tables[f"{tag}_{kind}"] = EmbeddingTable(ids, vectors, trainable=False)
    try:
        epoch = int(meta.get("epoch", "0"))
    except ValueError:
        raise DataValidationError(f"{directory / 'state.csv'}: epoch must be an integer") from None
    return DualTrainerState(
        domains=(meta.get("domain_a", "a"), meta.get("domain_b", "b")),
        rs_a=recommender_from_tensors(files.read_tensors(directory / "rs_a.csv")),
        rs_b=recommender_from_tensors(files.read_tensors(directory / "rs_b.csv")),
        mapping=files.read_mapping(directory / "mapping.txt"),
        users_a=tables["a_user"],
        items_a=tables["a_item"],
        users_b=tables["b_user"],
        items_b=tables["b_item"],
        epoch=epoch,
        converged=meta.get("converged") == "true",
    )
