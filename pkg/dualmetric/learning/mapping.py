"""Orthogonal transitional mapping between two domains' user-embedding spaces"""

import logging
from collections.abc import Sequence

import numpy as np

from dualmetric.core.errors import DataValidationError, ShapeError
from dualmetric.core.tensor import as_matrix, gram_schmidt_orthonormalize
from dualmetric.models.embedding import LatentEmbedding
from dualmetric.models.mapping import OrthogonalMap, orthogonality_error

logger = logging.getLogger(__name__)

# Composition drift above which the product is re-orthonormalized
COMPOSE_DRIFT_TOL = 1e-9


def _check_dim(x: OrthogonalMap, k: int) -> None:
    if k != x.k:
        raise ShapeError(f"embedding dim {k} does not match map dim {x.k}")


def map_forward(x: OrthogonalMap, e: LatentEmbedding) -> LatentEmbedding:
    """X e: domain-A user embedding expressed in domain B"""
    _check_dim(x, e.dim)
    return LatentEmbedding(owner_id=e.owner_id, vector=tuple((x.matrix @ np.asarray(e.vector)).tolist()))


def map_inverse(x: OrthogonalMap, e: LatentEmbedding) -> LatentEmbedding:
    """X^T e: domain-B user embedding expressed in domain A"""
    _check_dim(x, e.dim)
    return LatentEmbedding(owner_id=e.owner_id, vector=tuple((x.matrix.T @ np.asarray(e.vector)).tolist()))


def pair_matrices(pairs: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray]:
    """
    Stack overlap pairs as column matrices.

    Pairs may hold ``LatentEmbedding``s or plain vectors.

    Returns:
        (A, B), both k x n, column j holding pair j

    Raises:
        DataValidationError: If there are no pairs
        ShapeError: If dimensions disagree
    """
    if len(pairs) == 0:
        raise DataValidationError("alignment needs at least one overlap pair")

    def vec(v) -> np.ndarray:
        return np.asarray(v.vector if isinstance(v, LatentEmbedding) else v, dtype=np.float64)

    a = as_matrix(np.stack([vec(p[0]) for p in pairs], axis=1), "domain-A embeddings")
    b = as_matrix(np.stack([vec(p[1]) for p in pairs], axis=1), "domain-B embeddings")
    if a.shape != b.shape:
        raise ShapeError(f"pair dims differ: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def alignment_losses(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Primal sum ||X a - b||^2 and dual sum ||a - X^T b||^2 over matrix columns"""
    primal = float(np.sum((x @ a - b) ** 2))
    dual = float(np.sum((a - x.T @ b) ** 2))
    return primal, dual


def alignment_loss(x: OrthogonalMap, pairs: Sequence[tuple]) -> tuple[float, float]:
    """
    Primal and dual alignment losses over overlap pairs (W_ou_A, W_ou_B).

    Equal for orthogonal X.

    Raises:
        DataValidationError: If pairs is empty
        ShapeError: If dimensions disagree with the map
    """
    a, b = pair_matrices(pairs)
    _check_dim(x, a.shape[0])
    return alignment_losses(x.matrix, a, b)


def alignment_gradient(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Gradient of (primal + dual) / 2 with respect to X.

    d primal = 2 (X A - B) A^T, d dual = 2 B (X^T B - A)^T.
    """
    return (x @ a - b) @ a.T + b @ (x.T @ b - a).T


def update_mapping(x: OrthogonalMap, pairs: Sequence[tuple], lr: float) -> tuple[OrthogonalMap, float]:
    """
    One gradient step on the averaged primal/dual loss, then Gram-Schmidt.

    The step uses the per-pair mean gradient so ``lr`` does not depend on the
    number of overlap users.

    Returns:
        Re-orthonormalized map and the pre-step loss (primal + dual) / 2

    Raises:
        DataValidationError: If pairs is empty
        DegenerateInputError: If the step collapsed the rank (lower lr)
    """
    a, b = pair_matrices(pairs)
    _check_dim(x, a.shape[0])
    primal, dual = alignment_losses(x.matrix, a, b)
    gradient = alignment_gradient(x.matrix, a, b) / a.shape[1]
    updated = gram_schmidt_orthonormalize(x.matrix - lr * gradient)
    return updated, 0.5 * (primal + dual)


def compose_mappings(maps: Sequence[OrthogonalMap]) -> OrthogonalMap:
    """
    Chain hop maps [X_12, X_23, ..., X_(N-1)N] into X_1N.

    Applying the result to a domain-1 embedding equals applying each hop in
    sequence, so X_1N = X_(N-1)N ... X_23 X_12.

    Raises:
        DataValidationError: If the list is empty
        ShapeError: If hop dimensions differ
    """
    if not maps:
        raise DataValidationError("nothing to compose")
    k = maps[0].k
    product = np.eye(k)
    for hop in maps:
        if hop.k != k:
            raise ShapeError(f"cannot compose {k}x{k} with {hop.k}x{hop.k}")
        product = hop.matrix @ product
    if orthogonality_error(product) > COMPOSE_DRIFT_TOL:
        logger.debug("Composed map drifted; re-orthonormalizing")
        return gram_schmidt_orthonormalize(product)
    return OrthogonalMap(matrix=product)


def min_overlap_required(k: int) -> int:
    """Overlap users needed to pin down a k x k orthogonal map: k(k-1)/2"""
    if k < 1:
        raise DataValidationError(f"embedding dim must be at least 1, got {k}")
    return k * (k - 1) // 2
