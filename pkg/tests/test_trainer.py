"""Tests for the dual training loop"""

import math

import numpy as np
import pytest
import torch

from dualmetric.core.errors import DataValidationError, NumericDivergenceError, UnknownIdError
from dualmetric.evaluation.metrics import evaluate_domain
from dualmetric.learning.trainer import (
    IndexedRatings,
    build_state,
    component_seed,
    has_converged,
    index_ratings,
    load_checkpoint,
    predict_final,
    predict_known,
    run_epoch,
    save_checkpoint,
    train,
)
from dualmetric.models.dataset import DomainDataset, OverlapRegistry, SyntheticConfig
from dualmetric.models.mapping import ORTHOGONALITY_TOL
from dualmetric.models.training import AutoencoderConfig, FeatureMode, LossRecord, TrainConfig
from dualmetric.storage.synthetic import generate_synthetic_pair


@pytest.fixture(scope="module")
def pair():
    """Small coupled synthetic pair"""
    return generate_synthetic_pair(
        SyntheticConfig(
            users_per_domain=40,
            items_per_domain=30,
            latent_dim=4,
            overlap_count=20,
            ratings_per_user=8,
            user_feature_dim=8,
            item_feature_dim=8,
            seed=0,
        )
    )


@pytest.fixture
def cfg():
    """Fast training settings"""
    return TrainConfig(
        max_epochs=3,
        batch_size=16,
        hidden_layers=(8,),
        autoencoder=AutoencoderConfig(latent_dim=4, hidden_layers=(8,), epochs=5, min_steps=0, batch_size=16),
        seed=0,
    )


def _record(epoch: int, loss: float) -> LossRecord:
    return LossRecord(
        epoch=epoch, L_A=loss, L_B=0.0, L_oA=0.0, L_oB=0.0, L_Astar=0.0, L_Bstar=0.0, val_A=0.0, val_B=0.0
    )


def test_component_seed_is_stable():
    """Test that derived seeds depend only on their keys"""
    assert component_seed(7, 1, 2) == component_seed(7, 1, 2)
    assert component_seed(7, 1, 2) != component_seed(7, 2, 1)
    assert 0 <= component_seed(7) < 2**32


def test_has_converged():
    """Test the loss-delta stopping rule"""
    assert not has_converged([], 1e-5)
    assert not has_converged([_record(1, 0.5)], 1e-5)
    assert has_converged([_record(1, 0.5), _record(2, 0.5 + 1e-7)], 1e-5)
    assert not has_converged([_record(1, 0.5), _record(2, 0.4)], 1e-5)
    assert has_converged([0.3, 0.3], 1e-5)


def test_train_records_history(pair, cfg):
    """Test that a run records one loss entry per epoch"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    assert state.epoch == len(state.history) == 3
    for record in state.history:
        assert record.L_A > 0.0 and record.L_B > 0.0
        assert record.L_oA > 0.0 and record.L_Astar > 0.0
        assert math.isclose(record.L_oA, record.L_oB, rel_tol=1e-6, abs_tol=1e-9)
        assert record.val_A > 0.0
    assert set(state.autoencoder_history) == {"a_user", "a_item", "b_user", "b_item"}


def test_mapping_stays_orthogonal_every_epoch(pair, cfg):
    """Test ||XX^T - I|| after every mapping phase"""
    state = build_state(pair.domain_a, pair.domain_b, cfg)
    data_a = index_ratings(pair.domain_a, *state.tables("a"))
    data_b = index_ratings(pair.domain_b, *state.tables("b"))
    for _ in range(5):
        run_epoch(state, data_a, data_b, pair.registry, cfg)
        assert state.mapping.orthogonality_error() <= ORTHOGONALITY_TOL
    assert not np.allclose(state.mapping.matrix, np.eye(4))


def test_train_is_deterministic(pair, cfg):
    """Test that identical seeds reproduce the run"""
    first = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    second = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    assert [r.as_row() for r in first.history] == [r.as_row() for r in second.history]
    np.testing.assert_array_equal(first.mapping.matrix, second.mapping.matrix)


def test_no_transfer_skips_mapping_and_cross_phases(pair, cfg):
    """Test the separately trained baseline"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg.model_copy(update={"transfer": False}))
    for record in state.history:
        assert record.L_oA == record.L_oB == record.L_Astar == record.L_Bstar == 0.0
        assert record.L_A > 0.0
    np.testing.assert_array_equal(state.mapping.matrix, np.eye(4))


def test_empty_registry_keeps_identity_map(pair, cfg):
    """Test that without overlap users the map is never updated"""
    state = train(pair.domain_a, pair.domain_b, OverlapRegistry(), cfg)
    np.testing.assert_array_equal(state.mapping.matrix, np.eye(4))
    assert all(record.L_oA == 0.0 and record.L_Astar > 0.0 for record in state.history)


def test_convergence_stops_early(pair, cfg):
    """Test that a loose tolerance stops after two epochs"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg.model_copy(update={"convergence_eps": 10.0}))
    assert state.converged
    assert state.epoch == 2


def test_ids_only_mode_trains_embeddings(pair, cfg):
    """Test the feature-free mode"""
    ids_cfg = cfg.model_copy(update={"feature_mode": FeatureMode.IDS_ONLY})
    initial = build_state(pair.domain_a, pair.domain_b, ids_cfg).users_a.vectors()
    state = train(pair.domain_a, pair.domain_b, pair.registry, ids_cfg)
    assert state.users_a.trainable
    assert state.autoencoder_history == {}
    assert not np.allclose(initial, state.users_a.vectors())


def test_features_mode_requires_features(pair, cfg):
    """Test that feature mode refuses a domain without features"""
    bare = DomainDataset(domain_name="bare", ratings=pair.domain_a.ratings)
    with pytest.raises(DataValidationError):
        train(bare, pair.domain_b, pair.registry, cfg)


def test_divergence_names_phase_epoch_and_batch(pair, cfg):
    """Test that a non-finite loss reports where it happened"""
    state = build_state(pair.domain_a, pair.domain_b, cfg)
    data_a = index_ratings(pair.domain_a, *state.tables("a"))
    data_b = index_ratings(pair.domain_b, *state.tables("b"))
    poisoned = IndexedRatings(data_a.users, data_a.items, torch.full_like(data_a.ratings, float("nan")))
    with pytest.raises(NumericDivergenceError) as exc_info:
        run_epoch(state, poisoned, data_b, pair.registry, cfg)
    assert exc_info.value.phase == "within-domain-a"
    assert exc_info.value.epoch == 1
    assert exc_info.value.batch == 0


def test_predictions(pair, cfg):
    """Test single and batch within-domain predictions"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    record = pair.domain_a.ratings[0]
    single = predict_final(state, "a", record.user_id, record.item_id)
    assert 0.0 < single < 1.0
    mask, batch = predict_known(state, "domain_a", [record.user_id, "ghost"], [record.item_id, record.item_id])
    assert mask.tolist() == [True, False]
    assert batch[0] == pytest.approx(single)
    with pytest.raises(UnknownIdError):
        predict_final(state, "a", "ghost", record.item_id)
    with pytest.raises(UnknownIdError):
        state.tag_of("music")


def test_checkpoint_round_trip(tmp_path, pair, cfg):
    """Test that a reloaded checkpoint predicts identically"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    save_checkpoint(state, tmp_path)
    for name in ("rs_a.csv", "rs_b.csv", "mapping.txt", "history.csv", "state.csv", "embeddings_b_item.csv"):
        assert (tmp_path / name).is_file()
    loaded = load_checkpoint(tmp_path)
    assert loaded.domains == ("domain_a", "domain_b")
    assert loaded.epoch == state.epoch
    np.testing.assert_array_equal(loaded.mapping.matrix, state.mapping.matrix)
    for record in pair.domain_b.ratings[:10]:
        assert predict_final(loaded, "b", record.user_id, record.item_id) == pytest.approx(
            predict_final(state, "b", record.user_id, record.item_id), abs=1e-12
        )


def test_evaluate_domain_report(pair, cfg):
    """Test scoring a trained state on held-out ratings"""
    state = train(pair.domain_a, pair.domain_b, pair.registry, cfg)
    report = evaluate_domain(state, "a", pair.domain_a)
    assert report.domain == "domain_a"
    assert report.n_test == len(pair.domain_a.ratings)
    assert report.rmse >= report.mae >= 0.0
    assert 0.0 <= report.precision_at_k <= 1.0
    assert 0.0 <= report.recall_at_k <= 1.0


@pytest.mark.slow
def test_orthogonality_over_full_run():
    """Test ||XX^T - I|| <= 1e-6 after every epoch of a 100-epoch k=16 run"""
    pair = generate_synthetic_pair(SyntheticConfig(users_per_domain=200, items_per_domain=100, overlap_count=120))
    cfg = TrainConfig(max_epochs=100, autoencoder=AutoencoderConfig(epochs=10), seed=1)
    state = build_state(pair.domain_a, pair.domain_b, cfg)
    data_a = index_ratings(pair.domain_a, *state.tables("a"))
    data_b = index_ratings(pair.domain_b, *state.tables("b"))
    for _ in range(cfg.max_epochs):
        run_epoch(state, data_a, data_b, pair.registry, cfg)
        assert state.mapping.orthogonality_error() <= ORTHOGONALITY_TOL


def test_validation_rmse_improves_on_planted_ratings():
    """Test that 30 epochs on noiseless planted ratings beat both the first epoch and the mean predictor"""
    planted = generate_synthetic_pair(
        SyntheticConfig(
            users_per_domain=200,
            items_per_domain=80,
            latent_dim=4,
            overlap_count=60,
            ratings_per_user=20,
            user_feature_dim=8,
            item_feature_dim=8,
            noise_std=0.0,
            seed=2,
        )
    )
    cfg = TrainConfig(
        max_epochs=30,
        convergence_eps=1e-12,
        autoencoder=AutoencoderConfig(latent_dim=4, hidden_layers=(8,), min_steps=600),
        seed=0,
    )
    state = train(planted.domain_a, planted.domain_b, planted.registry, cfg)
    assert len(state.history) == 30
    first, last = state.history[0], state.history[-1]
    assert last.val_A < first.val_A
    assert last.val_B < first.val_B
    spread_a = float(np.std([r.rating for r in planted.domain_a.ratings]))
    spread_b = float(np.std([r.rating for r in planted.domain_b.ratings]))
    assert last.val_A < 0.9 * spread_a
    assert last.val_B < 0.9 * spread_b


@pytest.mark.slow
def test_total_loss_settles_by_epoch_ten():
    """Test that the epoch-10 total loss is within 10% of the final one on the default synthetic pair"""
    pair = generate_synthetic_pair(SyntheticConfig())
    state = train(pair.domain_a, pair.domain_b, pair.registry, TrainConfig(seed=0))
    assert len(state.history) >= 10
    final = state.history[-1].total
    assert abs(state.history[9].total - final) <= 0.1 * final
