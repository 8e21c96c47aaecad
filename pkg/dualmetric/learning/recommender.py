"""Domain-specific neural recommender over concatenated user/item embeddings"""

import logging
from collections.abc import Iterable, Sequence
from typing import Optional

import numpy as np
import torch
from torch import nn

from dualmetric.core.errors import DataValidationError, NumericDivergenceError, ShapeError
from dualmetric.models.embedding import LatentEmbedding
from dualmetric.learning.layers import DTYPE, init_uniform_, make_generator, make_optimizer, to_tensor

logger = logging.getLogger(__name__)


class RecommenderModel(nn.Module):
    """
    MLP ``2k -> hidden... -> 1`` with tanh hidden layers, inverted dropout on
    hidden activations and a logistic output, so predictions lie in (0, 1).
    """

    def __init__(self, latent_dim: int, hidden_layers: Sequence[int] = (32, 16), dropout_rate: float = 0.1):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise DataValidationError(f"dropout_rate must lie in [0, 1), got {dropout_rate}")
        self.latent_dim = latent_dim
        self.dropout_rate = dropout_rate
        sizes = [2 * latent_dim, *hidden_layers, 1]
        self.layers = nn.ModuleList(nn.Linear(a, b, dtype=DTYPE) for a, b in zip(sizes[:-1], sizes[1:]))

    def forward(
        self, users: torch.Tensor, items: torch.Tensor, generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        """
        Predicted ratings for row-aligned user and item embeddings.

        Dropout is applied only when ``generator`` is given, which keeps
        inference deterministic and makes training masks reproducible.
        """
        if users.shape[-1] != self.latent_dim or items.shape[-1] != self.latent_dim:
            raise ShapeError(
                f"expected embeddings of dim {self.latent_dim}, got {users.shape[-1]} and {items.shape[-1]}"
            )
        h = torch.cat([users, items], dim=-1)
        for layer in self.layers[:-1]:
            h = torch.tanh(layer(h))
            if generator is not None and self.dropout_rate > 0:
                keep = 1.0 - self.dropout_rate
                mask = torch.bernoulli(torch.full(h.shape, keep, dtype=DTYPE), generator=generator)
                h = h * mask / keep
        return torch.sigmoid(self.layers[-1](h)).squeeze(-1)


def new_recommender(
    latent_dim: int, hidden_layers: Sequence[int] = (32, 16), dropout_rate: float = 0.1, seed: int = 0
) -> RecommenderModel:
    """Seeded recommender with uniform fan-in initialisation"""
    return init_uniform_(RecommenderModel(latent_dim, hidden_layers, dropout_rate), make_generator(seed))


def predict(model: RecommenderModel, u: LatentEmbedding, i: LatentEmbedding) -> float:
    """
    Predicted normalised rating of item ``i`` for user ``u`` (inference mode).

    Raises:
        ShapeError: If either embedding does not have the model's dimension
    """
    with torch.no_grad():
        return float(model(to_tensor(u.vector).unsqueeze(0), to_tensor(i.vector).unsqueeze(0))[0])


def predict_batch(model: RecommenderModel, users, items) -> np.ndarray:
    """Inference-mode predictions for row-aligned embedding matrices"""
    with torch.no_grad():
        return model(to_tensor(users), to_tensor(items)).numpy().copy()


def mse_loss(model: RecommenderModel, users, items, ratings, generator: Optional[torch.Generator] = None):
    """Mean squared error between predictions and ratings"""
    return ((model(users, items, generator) - ratings) ** 2).mean()


def train_step(
    model: RecommenderModel,
    users: torch.Tensor,
    items: torch.Tensor,
    ratings: torch.Tensor,
    lr: float,
    generator: Optional[torch.Generator] = None,
    extra_params: Iterable[torch.Tensor] = (),
    phase: str = "within-domain",
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> float:
    """
    One optimizer step on the batch MSE.

    Embedding tensors that require grad (the trainable tables of the
    feature-free mode) are updated through ``extra_params``. Without an
    ``optimizer`` the step is plain gradient descent with step size ``lr``;
    a persistent optimizer (Adam in the dual loop) must already hold the
    model and extra parameters, and ``lr`` is ignored.

    Args:
        model: Recommender to update in place
        users: (batch, k) user embeddings
        items: (batch, k) item embeddings
        ratings: (batch,) normalised targets
        lr: Step size of the plain gradient step
        generator: Dropout mask source; None disables dropout
        extra_params: Additional leaf tensors to update with the same step
        phase: Label used in divergence errors
        optimizer: Optimizer carrying state across steps

    Returns:
        Batch loss before the step

    Raises:
        DataValidationError: On an empty batch
        NumericDivergenceError: If the loss is not finite
    """
    if ratings.numel() == 0:
        raise DataValidationError("training batch is empty")
    if optimizer is None:
        optimizer = make_optimizer([*model.parameters(), *extra_params], "sgd", lr)
    optimizer.zero_grad()
    loss = mse_loss(model, users, items, ratings, generator)
    if not torch.isfinite(loss):
        raise NumericDivergenceError("recommender loss is not finite", phase=phase)
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def train_cross_step(
    model: RecommenderModel,
    mapped_users: torch.Tensor,
    items: torch.Tensor,
    ratings: torch.Tensor,
    lr: float,
    generator: Optional[torch.Generator] = None,
    extra_params: Iterable[torch.Tensor] = (),
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> float:
    """
    Gradient step on the cross-domain loss ||r - RS(X W_u, W_i)||^2.

    ``mapped_users`` already carries the map; the map itself is a constant
    here, only the recommender (and trainable embeddings) move.
    """
    return train_step(
        model,
        mapped_users,
        items,
        ratings,
        lr,
        generator=generator,
        extra_params=extra_params,
        phase="cross-domain",
        optimizer=optimizer,
    )


def recommender_tensors(model: RecommenderModel) -> dict[str, np.ndarray]:
    """Named parameter arrays for checkpointing"""
    tensors = {name: p.detach().numpy().copy() for name, p in model.named_parameters()}
    tensors["meta.dropout_rate"] = np.array([[model.dropout_rate]])
    tensors["meta.latent_dim"] = np.array([[float(model.latent_dim)]])
    return tensors


def recommender_from_tensors(tensors: dict[str, np.ndarray]) -> RecommenderModel:
    """Rebuild a recommender from ``recommender_tensors`` output"""
    try:
        latent_dim = int(tensors["meta.latent_dim"][0, 0])
        dropout_rate = float(tensors["meta.dropout_rate"][0, 0])
    except KeyError as exc:
        raise DataValidationError(f"checkpoint is missing {exc.args[0]!r}") from None
    weights = sorted(
        (name for name in tensors if name.startswith("layers.") and name.endswith(".weight")),
        key=lambda name: int(name.split(".")[1]),
    )
    hidden = [tensors[name].shape[0] for name in weights[:-1]]
    model = RecommenderModel(latent_dim, hidden, dropout_rate)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name not in tensors:
                raise DataValidationError(f"checkpoint is missing {name!r}")
            param.copy_(to_tensor(tensors[name]).reshape(param.shape))
    return model
