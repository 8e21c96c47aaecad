"""Tests for the orthogonal cross-domain mapping"""

import numpy as np
import pytest
from pydantic import ValidationError

from dualmetric.core.errors import DataValidationError, ShapeError
from dualmetric.core.tensor import finite_diff_grad, procrustes_oracle, random_orthogonal, relative_error
from dualmetric.learning.mapping import (
    alignment_gradient,
    alignment_loss,
    alignment_losses,
    compose_mappings,
    map_forward,
    map_inverse,
    min_overlap_required,
    pair_matrices,
    update_mapping,
)
from dualmetric.models.dataset import SyntheticConfig
from dualmetric.models.embedding import LatentEmbedding
from dualmetric.models.mapping import ORTHOGONALITY_TOL, OrthogonalMap
from dualmetric.storage.synthetic import generate_synthetic_chain


def _ball_vector(rng: np.random.Generator, k: int) -> np.ndarray:
    """Random vector strictly inside the unit ball"""
    v = rng.standard_normal(k)
    return v / np.linalg.norm(v) * rng.uniform(0.1, 0.95)


def _embedding(rng: np.random.Generator, k: int, owner: str = "u1") -> LatentEmbedding:
    return LatentEmbedding(owner_id=owner, vector=tuple(_ball_vector(rng, k)))


def test_orthogonal_map_rejects_non_orthogonal():
    """Test that the model validator rejects X X^T != I"""
    with pytest.raises(ValidationError):
        OrthogonalMap(matrix=np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_orthogonal_map_rejects_non_square():
    """Test that a non-square matrix is rejected"""
    with pytest.raises(ValidationError):
        OrthogonalMap(matrix=np.ones((2, 3)))


def test_orthogonal_map_inverse_is_transpose():
    """Test inverse and identity helpers"""
    mapping = OrthogonalMap(matrix=random_orthogonal(4, np.random.default_rng(0)))
    np.testing.assert_array_equal(mapping.inverse.matrix, mapping.matrix.T)
    assert OrthogonalMap.identity(3).orthogonality_error() == 0.0


def test_map_preserves_inner_products():
    """Test <Xa, Xb> = <a, b> on random instances"""
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k = int(rng.integers(2, 9))
        x = OrthogonalMap(matrix=random_orthogonal(k, rng))
        a, b = _embedding(rng, k, "a"), _embedding(rng, k, "b")
        before = float(np.dot(a.vector, b.vector))
        after = float(np.dot(map_forward(x, a).vector, map_forward(x, b).vector))
        assert abs(before - after) <= 1e-9


def test_map_inverse_round_trip():
    """Test X^T (X e) = e"""
    rng = np.random.default_rng(2)
    for _ in range(1000):
        k = int(rng.integers(2, 9))
        x = OrthogonalMap(matrix=random_orthogonal(k, rng))
        e = _embedding(rng, k)
        back = map_inverse(x, map_forward(x, e))
        assert back.owner_id == e.owner_id
        np.testing.assert_allclose(back.vector, e.vector, atol=1e-9)


def test_map_dimension_mismatch():
    """Test that a wrong embedding dimension is rejected"""
    rng = np.random.default_rng(3)
    with pytest.raises(ShapeError):
        map_forward(OrthogonalMap.identity(3), _embedding(rng, 4))


def test_primal_equals_dual_for_orthogonal_map():
    """Test that the two alignment losses agree for orthogonal X"""
    rng = np.random.default_rng(4)
    for _ in range(1000):
        k = int(rng.integers(2, 9))
        x = OrthogonalMap(matrix=random_orthogonal(k, rng))
        pairs = [(_ball_vector(rng, k), _ball_vector(rng, k)) for _ in range(int(rng.integers(1, 6)))]
        primal, dual = alignment_loss(x, pairs)
        assert abs(primal - dual) <= 1e-9 * max(1.0, primal)


def test_alignment_loss_accepts_embeddings():
    """Test that LatentEmbedding pairs and raw vectors give the same loss"""
    rng = np.random.default_rng(5)
    a, b = _embedding(rng, 3, "a"), _embedding(rng, 3, "b")
    x = OrthogonalMap.identity(3)
    assert alignment_loss(x, [(a, b)]) == alignment_loss(x, [(np.array(a.vector), np.array(b.vector))])


def test_alignment_loss_empty():
    """Test that an empty pair list is rejected"""
    with pytest.raises(DataValidationError):
        alignment_loss(OrthogonalMap.identity(2), [])


def test_alignment_gradient_matches_finite_differences():
    """Test the analytic gradient of (primal + dual) / 2"""
    rng = np.random.default_rng(6)
    for _ in range(50):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(1, 8))
        a, b = rng.standard_normal((k, n)), rng.standard_normal((k, n))
        x = rng.standard_normal((k, k))

        def objective(flat: np.ndarray) -> float:
            primal, dual = alignment_losses(flat.reshape(k, k), a, b)
            return 0.5 * (primal + dual)

        numeric = finite_diff_grad(objective, x.ravel()).reshape(k, k)
        assert relative_error(alignment_gradient(x, a, b), numeric) <= 1e-4


def test_update_mapping_stays_orthogonal():
    """Test that every update is re-orthonormalized"""
    rng = np.random.default_rng(7)
    x = OrthogonalMap.identity(6)
    pairs = [(_ball_vector(rng, 6), _ball_vector(rng, 6)) for _ in range(20)]
    for _ in range(50):
        x, loss = update_mapping(x, pairs, lr=1.0)
        assert loss >= 0.0
        assert x.orthogonality_error() <= ORTHOGONALITY_TOL


def test_mapping_recovers_planted_map_from_minimal_overlap():
    """Test recovery of a planted k=16 map from exactly k(k-1)/2 noiseless pairs"""
    rng = np.random.default_rng(8)
    k = 16
    n = min_overlap_required(k)
    q = random_orthogonal(k, rng, proper=True)

    def unit(v: np.ndarray) -> np.ndarray:
        return v / np.linalg.norm(v)

    sources = [unit(rng.standard_normal(k)) for _ in range(n)]
    pairs = [(s, q @ s) for s in sources]
    oracle = procrustes_oracle([s for s, _ in pairs], [t for _, t in pairs])

    x = OrthogonalMap.identity(k)
    for _ in range(20000):
        x, _ = update_mapping(x, pairs, lr=2.0)
        if np.linalg.norm(x.matrix - oracle.matrix) < 1e-9:
            break

    assert np.linalg.norm(x.matrix - oracle.matrix) <= 1e-2
    held_out = [unit(rng.standard_normal(k)) for _ in range(50)]
    errors = [np.linalg.norm(x.matrix @ s - q @ s) for s in held_out]
    assert max(errors) <= 1e-3


def test_min_overlap_required():
    """Test the k(k-1)/2 overlap bound"""
    assert min_overlap_required(16) == 120
    assert min_overlap_required(1) == 0
    with pytest.raises(DataValidationError):
        min_overlap_required(0)


def test_pair_matrices_columns():
    """Test that pairs become matrix columns"""
    a, b = pair_matrices([([1.0, 0.0], [0.0, 1.0]), ([0.5, 0.5], [0.2, 0.1])])
    np.testing.assert_array_equal(a, [[1.0, 0.5], [0.0, 0.5]])
    np.testing.assert_array_equal(b, [[0.0, 0.2], [1.0, 0.1]])


def test_compose_mappings_matches_sequential_hops():
    """Test that the composed map equals applying each hop in turn"""
    rng = np.random.default_rng(9)
    hops = [OrthogonalMap(matrix=random_orthogonal(5, rng)) for _ in range(3)]
    composed = compose_mappings(hops)
    v = _ball_vector(rng, 5)
    expected = hops[2].matrix @ (hops[1].matrix @ (hops[0].matrix @ v))
    np.testing.assert_allclose(composed.matrix @ v, expected, atol=1e-12)
    assert composed.orthogonality_error() <= ORTHOGONALITY_TOL


def test_compose_mappings_on_three_domain_chain():
    """Test multi-domain prediction: domain-a latents reach domain c through the composed map"""
    cfg = SyntheticConfig(
        users_per_domain=12,
        items_per_domain=10,
        latent_dim=4,
        overlap_count=6,
        ratings_per_user=3,
        user_feature_dim=4,
        item_feature_dim=4,
        seed=3,
    )
    _, registry, maps, latents = generate_synthetic_chain(cfg, n_domains=3)
    composed = compose_mappings(maps)
    for user_a, user_c in registry.pairs:
        np.testing.assert_allclose(composed.matrix @ latents["a_users"][user_a], latents["c_users"][user_c], atol=1e-12)


def test_compose_mappings_errors():
    """Test empty and mixed-dimension inputs"""
    with pytest.raises(DataValidationError):
        compose_mappings([])
    with pytest.raises(ShapeError):
        compose_mappings([OrthogonalMap.identity(2), OrthogonalMap.identity(3)])
