"""Dense linear algebra kernels shared by every learning component"""

from collections.abc import Callable, Sequence

import numpy as np

from dualmetric.core.errors import DegenerateInputError, NumericDivergenceError, ShapeError
from dualmetric.models.mapping import OrthogonalMap

# Pivot norms below this are treated as rank deficiency
RANK_TOL = 1e-10

# Default central-difference step
FD_STEP = 1e-5

DenseMatrix = np.ndarray
DenseVector = np.ndarray


def as_matrix(a, name: str = "matrix") -> DenseMatrix:
    """Coerce to a finite 2-D float64 array"""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericDivergenceError(f"{name} has non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> DenseVector:
    """Coerce to a finite 1-D float64 array"""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise NumericDivergenceError(f"{name} has non-finite entries")
    return x


def matmul(a, b) -> DenseMatrix:
    """
    Matrix product ``a @ b``.

    Raises:
        ShapeError: If ``a.cols != b.rows``
        NumericDivergenceError: If an operand or the product is not finite
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    product = a @ b
    if not np.all(np.isfinite(product)):
        raise NumericDivergenceError("matrix product overflowed")
    return product


def gram_schmidt_rows(m) -> DenseMatrix:
    """
    Orthonormalize the rows of a square matrix with modified Gram-Schmidt.

    Each row is swept twice against the already accepted rows, which keeps the
    result orthonormal to working precision even for badly conditioned input.
    Row i of the output spans the same leading subspace as rows 1..i of ``m``.

    Raises:
        ShapeError: If ``m`` is not square
        DegenerateInputError: If a pivot norm falls below ``RANK_TOL``
    """
    m = as_matrix(m)
    k, cols = m.shape
    if k != cols:
        raise ShapeError(f"Gram-Schmidt needs a square matrix, got {m.shape}")

    q = m.copy()
    for i in range(k):
        row = q[i]
        for _ in range(2):
            for j in range(i):
                row -= (row @ q[j]) * q[j]
        norm = np.linalg.norm(row)
        if norm < RANK_TOL:
            raise DegenerateInputError(f"row {i} is linearly dependent on earlier rows (pivot norm {norm:.3g})")
        q[i] = row / norm
    return q


def gram_schmidt_orthonormalize(m) -> OrthogonalMap:
    """Orthonormalize the rows of ``m`` and wrap the result as an ``OrthogonalMap``"""
    return OrthogonalMap(matrix=gram_schmidt_rows(m))


def procrustes_oracle(sources: Sequence[DenseVector], targets: Sequence[DenseVector]) -> OrthogonalMap:
    """
    Global minimizer of sum ||X s_i - t_i||^2 over orthogonal X.

    With S and T holding the vectors as columns, the optimum is U V^T where
    U diag(w) V^T is the SVD of the cross-covariance T S^T.

    Raises:
        ShapeError: On empty input, count mismatch or dimension mismatch
    """
    if len(sources) == 0 or len(sources) != len(targets):
        raise ShapeError(f"need equal non-zero counts, got {len(sources)} sources and {len(targets)} targets")
    s = as_matrix(np.stack([as_vector(v) for v in sources], axis=1), "sources")
    t = as_matrix(np.stack([as_vector(v) for v in targets], axis=1), "targets")
    if s.shape[0] != t.shape[0]:
        raise ShapeError(f"source dim {s.shape[0]} differs from target dim {t.shape[0]}")
    u, _, vt = np.linalg.svd(t @ s.T)
    return OrthogonalMap(matrix=u @ vt)


def finite_diff_grad(f: Callable[[DenseVector], float], p, h: float = FD_STEP) -> DenseVector:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Scalar function of a parameter vector
        p: Evaluation point
        h: Step size, must be positive

    Raises:
        ValueError: If ``h`` is not positive
        NumericDivergenceError: If ``f`` returns a non-finite value
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    p = as_vector(p, "parameters")
    grad = np.empty_like(p)
    shifted = p.copy()
    for i in range(p.size):
        shifted[i] = p[i] + h
        upper = float(f(shifted))
        shifted[i] = p[i] - h
        lower = float(f(shifted))
        shifted[i] = p[i]
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NumericDivergenceError(f"function is not finite around coordinate {i}")
        grad[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(a, b, floor: float = 1e-8) -> float:
    """Max-norm relative difference ``|a - b| / max(|a|, |b|, floor)``"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def random_orthogonal(k: int, rng: np.random.Generator, proper: bool = False) -> DenseMatrix:
    """
    Random orthogonal matrix from Gram-Schmidt of a Gaussian matrix.

    Args:
        k: Dimension
        rng: Source of randomness
        proper: Flip the first row if needed so that det = +1
    """
    q = gram_schmidt_rows(rng.standard_normal((k, k)))
    if proper and np.linalg.det(q) < 0:
        q[0] = -q[0]
    return q
