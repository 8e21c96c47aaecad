"""Tests for the dense linear algebra kernels"""

import numpy as np
import pytest

from dualmetric.core.errors import DegenerateInputError, NumericDivergenceError, ShapeError
from dualmetric.core.tensor import (
    finite_diff_grad,
    gram_schmidt_orthonormalize,
    gram_schmidt_rows,
    matmul,
    procrustes_oracle,
    random_orthogonal,
    relative_error,
)
from dualmetric.models.mapping import orthogonality_error


def test_matmul_matches_numpy():
    """Test matmul against the numpy product"""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    np.testing.assert_allclose(matmul(a, b), a @ b)


def test_matmul_shape_mismatch():
    """Test that incompatible operands are rejected"""
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_non_finite():
    """Test that NaN operands are reported as divergence"""
    a = np.ones((2, 2))
    a[0, 0] = np.nan
    with pytest.raises(NumericDivergenceError):
        matmul(a, np.ones((2, 2)))


def test_gram_schmidt_is_orthonormal():
    """Test that Gram-Schmidt output is orthonormal to working precision"""
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = gram_schmidt_rows(rng.standard_normal((8, 8)))
        assert orthogonality_error(q) < 1e-12


def test_gram_schmidt_ill_conditioned():
    """Test reorthogonalization on nearly dependent rows"""
    m = np.eye(6)
    m[1] = m[0] + 1e-7 * m[1]
    q = gram_schmidt_rows(m)
    assert orthogonality_error(q) < 1e-10


def test_gram_schmidt_keeps_orthogonal_input():
    """Test that an orthogonal matrix is a fixed point"""
    q = random_orthogonal(5, np.random.default_rng(2))
    np.testing.assert_allclose(gram_schmidt_rows(q), q, atol=1e-12)


def test_gram_schmidt_rank_deficient():
    """Test that dependent rows raise DegenerateInputError"""
    m = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
    with pytest.raises(DegenerateInputError):
        gram_schmidt_rows(m)


def test_gram_schmidt_requires_square():
    """Test that a non-square matrix is rejected"""
    with pytest.raises(ShapeError):
        gram_schmidt_rows(np.ones((2, 3)))


def test_gram_schmidt_orthonormalize_wraps_map():
    """Test the OrthogonalMap wrapper"""
    mapping = gram_schmidt_orthonormalize(np.random.default_rng(3).standard_normal((4, 4)))
    assert mapping.k == 4
    assert mapping.orthogonality_error() < 1e-12


def test_procrustes_recovers_planted_map():
    """Test that the oracle returns the exact map for noiseless pairs"""
    rng = np.random.default_rng(4)
    q = random_orthogonal(5, rng)
    sources = list(rng.standard_normal((30, 5)))
    targets = [q @ s for s in sources]
    result = procrustes_oracle(sources, targets)
    np.testing.assert_allclose(result.matrix, q, atol=1e-10)


def test_procrustes_count_mismatch():
    """Test that unequal pair counts are rejected"""
    with pytest.raises(ShapeError):
        procrustes_oracle([np.ones(3)], [])


def test_finite_diff_grad_quadratic():
    """Test central differences on f(p) = sum p^2"""
    p = np.array([0.5, -1.0, 2.0])
    grad = finite_diff_grad(lambda v: float(np.sum(v**2)), p)
    np.testing.assert_allclose(grad, 2 * p, atol=1e-8)


def test_finite_diff_grad_rejects_bad_step():
    """Test that a nonpositive step is rejected"""
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.ones(2), h=0.0)


def test_relative_error():
    """Test the max-norm relative difference"""
    assert relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert relative_error([1.0, 2.0], [1.0, 2.2]) == pytest.approx(0.2 / 2.2)


def test_random_orthogonal_proper():
    """Test that proper draws have determinant +1"""
    rng = np.random.default_rng(5)
    for _ in range(10):
        q = random_orthogonal(6, rng, proper=True)
        assert np.linalg.det(q) == pytest.approx(1.0)
        assert orthogonality_error(q) < 1e-12
