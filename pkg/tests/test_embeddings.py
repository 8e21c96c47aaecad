"""Tests for autoencoder embeddings and embedding tables"""

import numpy as np
import pytest
import torch

from dualmetric.core.errors import DataValidationError, ShapeError, UnknownIdError
from dualmetric.core.tensor import finite_diff_grad, relative_error
from dualmetric.learning.embeddings import (
    AutoencoderModel,
    EmbeddingTable,
    decode,
    embed_features,
    embed_ids_only,
    encode,
    project_unit_ball,
    reconstruction_loss,
    train_autoencoder,
)
from dualmetric.learning.layers import (
    DTYPE,
    init_uniform_,
    load_parameter_vector,
    make_generator,
    parameter_vector,
    to_tensor,
)
from dualmetric.models.dataset import DomainDataset, FeatureVector, RatingRecord, SyntheticConfig
from dualmetric.models.embedding import LatentEmbedding
from dualmetric.models.training import AutoencoderConfig
from dualmetric.storage.synthetic import generate_synthetic_pair


@pytest.fixture
def features():
    """40 feature vectors of dimension 6 lying near a 2-D subspace"""
    rng = np.random.default_rng(0)
    return rng.standard_normal((40, 2)) @ rng.standard_normal((2, 6)) * 0.5


@pytest.fixture
def ae_config():
    """Small autoencoder"""
    return AutoencoderConfig(
        latent_dim=2, hidden_layers=(4,), epochs=30, lr=0.05, optimizer="sgd", min_steps=0, batch_size=8, seed=3
    )


def test_project_unit_ball():
    """Test projection onto the unit ball"""
    np.testing.assert_allclose(project_unit_ball([3.0, 4.0]), [0.6, 0.8])
    np.testing.assert_allclose(project_unit_ball([0.3, 0.4]), [0.3, 0.4])


def test_autoencoder_gradient_matches_finite_differences():
    """Test autograd gradients of the reconstruction loss against central differences"""
    for seed in range(50):
        rng = np.random.default_rng(seed)
        model = init_uniform_(AutoencoderModel(4, 2, (3,)), make_generator(seed))
        x = to_tensor(rng.standard_normal((5, 4)) * 0.5)

        model.zero_grad()
        reconstruction_loss(model, x).backward()
        analytic = torch.cat([p.grad.reshape(-1) for p in model.parameters()]).numpy()

        params = parameter_vector(model).numpy()

        def loss_at(flat: np.ndarray) -> float:
            load_parameter_vector(model, flat)
            with torch.no_grad():
                return float(reconstruction_loss(model, x))

        numeric = finite_diff_grad(loss_at, params, h=1e-6)
        load_parameter_vector(model, params)
        assert relative_error(analytic, numeric) <= 1e-4


def test_train_autoencoder_reduces_loss(features, ae_config):
    """Test that training lowers the reconstruction error"""
    model, history = train_autoencoder(features, ae_config)
    assert len(history) == ae_config.epochs
    assert history[-1] < history[0]
    assert model.latent_dim == 2


def test_train_autoencoder_deterministic(features, ae_config):
    """Test that the same seed gives the same history"""
    _, first = train_autoencoder(features, ae_config)
    _, second = train_autoencoder(features, ae_config)
    assert first == second


def test_train_autoencoder_loss_non_increasing(features):
    """Test that full-batch gradient descent never raises the reconstruction error"""
    cfg = AutoencoderConfig(
        latent_dim=2, hidden_layers=(4,), epochs=200, lr=0.01, optimizer="sgd", min_steps=0, batch_size=40, seed=5
    )
    _, history = train_autoencoder(features, cfg)
    assert all(later <= earlier + 1e-6 for earlier, later in zip(history, history[1:]))
    assert history[-1] < history[0]


def test_train_autoencoder_min_steps_adds_epochs(features, ae_config):
    """Test that small feature sets get enough batches"""
    cfg = ae_config.model_copy(update={"epochs": 2, "min_steps": 50})
    _, history = train_autoencoder(features, cfg)
    assert len(history) == 10


def test_autoencoder_overfits_single_sample():
    """Test that one feature vector is reconstructed almost exactly"""
    x = np.array([[0.5, -0.3, 0.8, 0.1]])
    cfg = AutoencoderConfig(
        latent_dim=2, hidden_layers=(8,), epochs=3000, lr=0.02, optimizer="sgd", min_steps=0, batch_size=1, seed=0
    )
    _, history = train_autoencoder(x, cfg)
    assert history[-1] <= 1e-3


def test_linear_autoencoder_reconstructs_exactly():
    """Test that with k = m and no hidden layers the reconstruction error vanishes"""
    rng = np.random.default_rng(4)
    directions = rng.standard_normal((30, 3))
    x = directions / np.linalg.norm(directions, axis=1, keepdims=True) * rng.uniform(0.2, 0.6, (30, 1))
    model = init_uniform_(AutoencoderModel(3, 3, ()), make_generator(0))
    with torch.no_grad():
        for layer in (model.encoder[0], model.decoder[0]):
            layer.weight.copy_(torch.eye(3, dtype=DTYPE) + 0.1 * to_tensor(rng.standard_normal((3, 3))))
            layer.bias.zero_()
    cfg = AutoencoderConfig(
        latent_dim=3, hidden_layers=(), epochs=5000, lr=0.2, optimizer="sgd", min_steps=0, batch_size=30, seed=0
    )
    _, history = train_autoencoder(x, cfg, model=model)
    assert history[-1] <= 1e-6


def test_default_autoencoder_fits_synthetic_features():
    """Test that default optimiser settings capture most of the feature energy"""
    pair = generate_synthetic_pair(
        SyntheticConfig(
            users_per_domain=200, items_per_domain=50, latent_dim=4, user_feature_dim=8, item_feature_dim=8, seed=1
        )
    )
    features = np.array([fv.values for fv in pair.domain_a.user_features.values()])
    _, history = train_autoencoder(features, AutoencoderConfig(latent_dim=4, hidden_layers=(8,), seed=1))
    energy = float(np.mean(np.sum(features**2, axis=1)))
    assert history[-1] < 0.2 * energy


def test_train_autoencoder_empty():
    """Test that an empty feature set is rejected"""
    with pytest.raises(DataValidationError):
        train_autoencoder(np.empty((0, 3)), AutoencoderConfig(latent_dim=2, epochs=1))


def test_encode_stays_in_unit_ball(features, ae_config):
    """Test that encoded embeddings respect the unit ball"""
    model, _ = train_autoencoder(features, ae_config)
    for row, values in enumerate(features * 100.0):
        embedding = encode(model, FeatureVector(owner_id=f"u{row}", values=tuple(values)))
        assert embedding.dim == 2
        assert np.linalg.norm(embedding.vector) <= 1.0 + 1e-9


def test_encode_decode_dimensions(features, ae_config):
    """Test dimension checks of encode and decode"""
    model, _ = train_autoencoder(features, ae_config)
    decoded = decode(model, LatentEmbedding(owner_id="u1", vector=(0.1, 0.2)))
    assert decoded.dim == 6
    assert decoded.owner_id == "u1"
    with pytest.raises(ShapeError):
        encode(model, FeatureVector(owner_id="u1", values=(1.0, 2.0)))
    with pytest.raises(ShapeError):
        decode(model, LatentEmbedding(owner_id="u1", vector=(0.1, 0.2, 0.3)))


def test_embed_features_builds_frozen_table(features, ae_config):
    """Test that feature embeddings are frozen and id-addressed"""
    ids = [f"u{i}" for i in range(len(features))]
    table, history = embed_features(ids, features, ae_config)
    assert table.ids == ids
    assert table.dim == 2
    assert list(table.parameters()) == []
    assert len(history) == ae_config.epochs
    assert table.lookup("u3").owner_id == "u3"


def test_embedding_table_lookup_unknown():
    """Test that unknown ids raise UnknownIdError"""
    table = EmbeddingTable(["a", "b"], np.array([[0.1, 0.2], [3.0, 4.0]]))
    with pytest.raises(UnknownIdError):
        table.lookup("c")
    np.testing.assert_allclose(table.vectors()[1], [0.6, 0.8])


def test_embedding_table_shape_check():
    """Test that vectors must match the id count"""
    with pytest.raises(ShapeError):
        EmbeddingTable(["a"], np.zeros((2, 3)))


def test_embed_ids_only():
    """Test free embeddings for the feature-free mode"""
    ratings = tuple(
        RatingRecord(user_id=u, item_id=i, rating=0.5) for u, i in [("u1", "i1"), ("u2", "i1"), ("u2", "i2")]
    )
    ds = DomainDataset(domain_name="d", ratings=ratings)
    users, items = embed_ids_only(ds, 8, seed=0)
    assert users.ids == ["u1", "u2"]
    assert items.ids == ["i1", "i2"]
    assert users.trainable and items.trainable
    assert len(list(users.parameters())) == 1
    assert np.all(np.linalg.norm(users.vectors(), axis=1) <= 1.0)
    again, _ = embed_ids_only(ds, 8, seed=0)
    np.testing.assert_array_equal(again.vectors(), users.vectors())
