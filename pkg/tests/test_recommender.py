"""Tests for the domain-specific neural recommender"""

import numpy as np
import pytest
import torch

from dualmetric.core.errors import DataValidationError, NumericDivergenceError, ShapeError
from dualmetric.core.tensor import finite_diff_grad, relative_error
from dualmetric.learning.layers import (
    load_parameter_vector,
    make_generator,
    make_optimizer,
    parameter_vector,
    to_tensor,
)
from dualmetric.learning.recommender import (
    RecommenderModel,
    mse_loss,
    new_recommender,
    predict,
    predict_batch,
    recommender_from_tensors,
    recommender_tensors,
    train_cross_step,
    train_step,
)
from dualmetric.models.embedding import LatentEmbedding


def _batch(seed: int, n: int = 12, k: int = 3):
    rng = np.random.default_rng(seed)
    users = to_tensor(rng.uniform(-0.5, 0.5, (n, k)))
    items = to_tensor(rng.uniform(-0.5, 0.5, (n, k)))
    ratings = to_tensor(rng.uniform(0.0, 1.0, n))
    return users, items, ratings


def test_predictions_lie_in_unit_interval():
    """Test that the logistic output keeps predictions in (0, 1)"""
    model = new_recommender(3, (8, 4), seed=0)
    users, items, _ = _batch(0, n=50)
    predictions = predict_batch(model, users * 10, items * 10)
    assert np.all((predictions > 0.0) & (predictions < 1.0))


def test_predict_single_pair():
    """Test scalar prediction and dimension checks"""
    model = new_recommender(2, (4,), seed=1)
    u = LatentEmbedding(owner_id="u1", vector=(0.1, 0.2))
    i = LatentEmbedding(owner_id="i1", vector=(0.3, -0.1))
    assert 0.0 < predict(model, u, i) < 1.0
    with pytest.raises(ShapeError):
        predict(model, u, LatentEmbedding(owner_id="i2", vector=(0.1, 0.1, 0.1)))


def test_recommender_rejects_bad_dropout():
    """Test dropout bounds"""
    with pytest.raises(DataValidationError):
        RecommenderModel(2, (4,), dropout_rate=1.0)


def test_mse_gradient_matches_finite_differences():
    """Test autograd gradients of the rating loss against central differences"""
    for seed in range(50):
        model = new_recommender(3, (5, 4), dropout_rate=0.0, seed=seed)
        users, items, ratings = _batch(seed)

        model.zero_grad()
        mse_loss(model, users, items, ratings).backward()
        analytic = torch.cat([p.grad.reshape(-1) for p in model.parameters()]).numpy()

        params = parameter_vector(model).numpy()

        def loss_at(flat: np.ndarray) -> float:
            load_parameter_vector(model, flat)
            with torch.no_grad():
                return float(mse_loss(model, users, items, ratings))

        numeric = finite_diff_grad(loss_at, params, h=1e-6)
        load_parameter_vector(model, params)
        assert relative_error(analytic, numeric) <= 1e-4


def test_train_step_reduces_loss():
    """Test that repeated steps on one batch fit it better"""
    model = new_recommender(3, (8,), dropout_rate=0.0, seed=2)
    users, items, ratings = _batch(2)
    first = train_step(model, users, items, ratings, lr=0.5)
    for _ in range(300):
        last = train_step(model, users, items, ratings, lr=0.5)
    assert last < first


def test_train_step_updates_extra_params():
    """Test that trainable embeddings move with the recommender"""
    model = new_recommender(3, (8,), dropout_rate=0.0, seed=3)
    _, items, ratings = _batch(3)
    table = torch.nn.Parameter(to_tensor(np.full((12, 3), 0.1)))
    before = table.detach().clone()
    train_step(model, table, items, ratings, lr=0.5, extra_params=[table])
    assert not torch.equal(before, table.detach())


def test_zero_weights_predict_one_half():
    """Test that an all-zero network predicts the logistic midpoint"""
    model = new_recommender(3, (8, 4), seed=0)
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
    users, items, _ = _batch(6)
    np.testing.assert_array_equal(predict_batch(model, users, items), np.full(12, 0.5))


@pytest.mark.parametrize("optimizer", [None, "adam", "sgd"])
def test_exact_batch_leaves_parameters_unchanged(optimizer):
    """Test that a batch already predicted exactly has zero loss and no update"""
    model = new_recommender(3, (8,), dropout_rate=0.0, seed=7)
    users, items, _ = _batch(7)
    ratings = to_tensor(predict_batch(model, users, items))
    before = parameter_vector(model).clone()
    opt = None if optimizer is None else make_optimizer(model.parameters(), optimizer, 0.5)
    loss = train_step(model, users, items, ratings, lr=0.5, optimizer=opt)
    assert loss == 0.0
    assert torch.equal(before, parameter_vector(model))


def test_persistent_adam_fits_batch():
    """Test that a shared Adam optimizer carries state across steps and fits one batch"""
    model = new_recommender(3, (8,), dropout_rate=0.0, seed=2)
    users, items, ratings = _batch(2)
    opt = make_optimizer(model.parameters(), "adam", 0.01)
    first = train_step(model, users, items, ratings, lr=0.01, optimizer=opt)
    for _ in range(300):
        last = train_step(model, users, items, ratings, lr=0.01, optimizer=opt)
    assert last < first
    assert opt.state


def test_train_step_empty_batch():
    """Test that an empty batch is rejected"""
    model = new_recommender(3, (4,), seed=0)
    empty = to_tensor(np.empty((0, 3)))
    with pytest.raises(DataValidationError):
        train_step(model, empty, empty, to_tensor(np.empty(0)), lr=0.1)


def test_train_step_non_finite_loss():
    """Test that a NaN target is reported as divergence with its phase"""
    model = new_recommender(3, (4,), seed=0)
    users, items, ratings = _batch(0)
    ratings[0] = float("nan")
    with pytest.raises(NumericDivergenceError) as exc_info:
        train_cross_step(model, users, items, ratings, lr=0.1)
    assert exc_info.value.phase == "cross-domain"


def test_dropout_masks_are_reproducible():
    """Test that dropout depends only on the generator seed"""
    model = new_recommender(3, (16,), dropout_rate=0.5, seed=4)
    users, items, _ = _batch(4)
    with torch.no_grad():
        first = model(users, items, make_generator(9))
        second = model(users, items, make_generator(9))
        plain = model(users, items)
    assert torch.equal(first, second)
    assert not torch.equal(first, plain)
    np.testing.assert_array_equal(plain.numpy(), predict_batch(model, users, items))


def test_tensor_round_trip():
    """Test checkpoint tensors rebuild an identical model"""
    model = new_recommender(3, (6, 5), dropout_rate=0.2, seed=5)
    rebuilt = recommender_from_tensors(recommender_tensors(model))
    users, items, _ = _batch(5)
    assert rebuilt.dropout_rate == pytest.approx(0.2)
    np.testing.assert_array_equal(predict_batch(rebuilt, users, items), predict_batch(model, users, items))


def test_tensor_round_trip_missing_meta():
    """Test that incomplete checkpoints are rejected"""
    tensors = recommender_tensors(new_recommender(3, (4,), seed=0))
    del tensors["meta.latent_dim"]
    with pytest.raises(DataValidationError):
        recommender_from_tensors(tensors)
