"""Autoencoder embeddings and embedding tables"""

import logging
import math
from collections.abc import Sequence
from typing import Optional

import numpy as np
import torch
from torch import nn

from dualmetric.core.errors import DataValidationError, NumericDivergenceError, ShapeError, UnknownIdError
from dualmetric.core.log_format import log_metrics
from dualmetric.models.dataset import DomainDataset, FeatureVector
from dualmetric.models.embedding import LatentEmbedding
from dualmetric.models.training import AutoencoderConfig
from dualmetric.learning.layers import (
    DTYPE,
    build_mlp,
    init_uniform_,
    make_generator,
    make_optimizer,
    to_tensor,
    unit_ball,
)

logger = logging.getLogger(__name__)


def project_unit_ball(v) -> np.ndarray:
    """Return ``v`` if its norm is at most one, else ``v / ||v||``"""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 1.0 else v.copy()


class AutoencoderModel(nn.Module):
    """
    MLP autoencoder whose encoder output is projected into the unit ball.

    Encoder widths are ``input_dim -> hidden... -> latent_dim``; the decoder
    mirrors them. Hidden layers use tanh, output layers are linear.
    """

    def __init__(self, input_dim: int, latent_dim: int, hidden_layers: Sequence[int] = (32, 16)):
        super().__init__()
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden_layers = tuple(hidden_layers)
        self.encoder = build_mlp([input_dim, *self.hidden_layers, latent_dim])
        self.decoder = build_mlp([latent_dim, *reversed(self.hidden_layers), input_dim])

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Encoder forward pass followed by unit-ball projection"""
        return unit_ball(self.encoder(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Reconstruction of ``x``"""
        return self.decoder(self.embed(x))


def reconstruction_loss(model: AutoencoderModel, x: torch.Tensor) -> torch.Tensor:
    """Mean over rows of the squared reconstruction error ||x - dec(enc(x))||^2"""
    return ((x - model(x)) ** 2).sum(dim=1).mean()


def encode(model: AutoencoderModel, f: FeatureVector) -> LatentEmbedding:
    """
    Embed one feature vector.

    Raises:
        ShapeError: If the feature dimension differs from the model input
    """
    if f.dim != model.input_dim:
        raise ShapeError(f"feature dim {f.dim} does not match autoencoder input {model.input_dim}")
    with torch.no_grad():
        vector = model.embed(to_tensor(f.values).unsqueeze(0))[0]
    return LatentEmbedding(owner_id=f.owner_id, vector=tuple(vector.tolist()))


def decode(model: AutoencoderModel, e: LatentEmbedding) -> FeatureVector:
    """
    Map an embedding back to feature space.

    Raises:
        ShapeError: If the embedding dimension differs from the model's latent dimension
    """
    if e.dim != model.latent_dim:
        raise ShapeError(f"embedding dim {e.dim} does not match latent dim {model.latent_dim}")
    with torch.no_grad():
        values = model.decoder(to_tensor(e.vector).unsqueeze(0))[0]
    return FeatureVector(owner_id=e.owner_id, values=tuple(values.tolist()))


def train_autoencoder(
    features, cfg: AutoencoderConfig, model: Optional[AutoencoderModel] = None
) -> tuple[AutoencoderModel, list[float]]:
    """
    Fit an autoencoder to one domain's features of one entity kind.

    Mini-batch training (Adam by default, plain SGD with
    ``cfg.optimizer="sgd"``) on the mean squared reconstruction error. Small
    feature sets get extra epochs until ``cfg.min_steps`` batches were taken.
    The history holds the full-data loss after each epoch. Deterministic under
    ``cfg.seed``.

    Args:
        features: (count, m) feature matrix of a single domain and entity kind
        cfg: Architecture and optimisation settings
        model: Optional pre-initialised model to continue from

    Returns:
        Trained model and per-epoch loss history

    Raises:
        DataValidationError: If there are no feature vectors
        NumericDivergenceError: If the loss becomes non-finite (names the epoch)
    """
    x = to_tensor(features)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataValidationError(f"need a non-empty (count, dim) feature matrix, got shape {tuple(x.shape)}")

    generator = make_generator(cfg.seed)
    if model is None:
        model = init_uniform_(AutoencoderModel(x.shape[1], cfg.latent_dim, cfg.hidden_layers), generator)
    elif model.input_dim != x.shape[1]:
        raise ShapeError(f"feature dim {x.shape[1]} does not match autoencoder input {model.input_dim}")

    optimizer = make_optimizer(model.parameters(), cfg.optimizer, cfg.lr)
    history: list[float] = []
    n = x.shape[0]
    epochs = max(cfg.epochs, math.ceil(cfg.min_steps / math.ceil(n / cfg.batch_size)))
    for epoch in range(1, epochs + 1):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            optimizer.zero_grad()
            loss = reconstruction_loss(model, batch)
            if not torch.isfinite(loss):
                raise NumericDivergenceError("autoencoder loss is not finite", phase="autoencoder", epoch=epoch)
            loss.backward()
            optimizer.step()

        with torch.no_grad():
            epoch_loss = float(reconstruction_loss(model, x))
        if not math.isfinite(epoch_loss):
            raise NumericDivergenceError("autoencoder loss is not finite", phase="autoencoder", epoch=epoch)
        history.append(epoch_loss)
        logger.debug("Autoencoder epoch %d loss %.6g", epoch, epoch_loss)

    log_metrics(logger, logging.INFO, "Autoencoder trained", epochs=epochs, final_loss=history[-1], rows=n)
    return model, history


class EmbeddingTable(nn.Module):
    """
    Id-addressed embedding matrix with unit-ball projection on lookup.

    Frozen tables hold autoencoder outputs; trainable tables are the free
    per-id embeddings of the feature-free mode, updated with the recommender.
    """

    def __init__(self, ids: Sequence[str], vectors, trainable: bool = False):
        super().__init__()
        self.ids = list(ids)
        self.index = {owner: row for row, owner in enumerate(self.ids)}
        weight = to_tensor(vectors).clone()
        if weight.ndim != 2 or weight.shape[0] != len(self.ids):
            raise ShapeError(f"expected ({len(self.ids)}, k) vectors, got {tuple(weight.shape)}")
        self.trainable = trainable
        if trainable:
            self.weight = nn.Parameter(weight)
        else:
            self.register_buffer("weight", weight)

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, rows: torch.Tensor) -> torch.Tensor:
        return unit_ball(self.weight[rows])

    def vectors(self) -> np.ndarray:
        """All embeddings (projected), row-aligned with ``ids``"""
        with torch.no_grad():
            return unit_ball(self.weight).numpy().copy()

    def rows_of(self, ids: Sequence[str]) -> torch.Tensor:
        try:
            return torch.as_tensor([self.index[i] for i in ids], dtype=torch.long)
        except KeyError as exc:
            raise UnknownIdError(f"no embedding for id {exc.args[0]!r}") from None

    def lookup(self, owner_id: str) -> LatentEmbedding:
        """Embedding of one id"""
        row = self.rows_of([owner_id])
        with torch.no_grad():
            vector = self(row)[0]
        return LatentEmbedding(owner_id=owner_id, vector=tuple(vector.tolist()))


def embed_features(ids: Sequence[str], features, cfg: AutoencoderConfig) -> tuple[EmbeddingTable, list[float]]:
    """Train an autoencoder on one feature matrix and freeze its embeddings into a table"""
    model, history = train_autoencoder(features, cfg)
    with torch.no_grad():
        vectors = model.embed(to_tensor(features))
    return EmbeddingTable(ids, vectors, trainable=False), history


def embed_ids_only(ds: DomainDataset, k: int, seed: int) -> tuple[EmbeddingTable, EmbeddingTable]:
    """
    Free per-id user and item embeddings for the feature-free mode.

    Entries start uniform in [-1/sqrt(k), 1/sqrt(k)] (inside the unit ball) and
    are trained jointly with the recommender.
    """
    user_ids, item_ids = ds.user_ids(), ds.item_ids()
    generator = make_generator(seed)
    bound = 1.0 / math.sqrt(k)

    def draw(count: int) -> torch.Tensor:
        return (torch.rand((count, k), generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound

    return (
        EmbeddingTable(user_ids, draw(len(user_ids)), trainable=True),
        EmbeddingTable(item_ids, draw(len(item_ids)), trainable=True),
    )
