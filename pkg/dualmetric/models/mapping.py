"""Orthogonal cross-domain mapping model"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

# Largest ||X X^T - I||_F accepted for an externally visible map
ORTHOGONALITY_TOL = 1e-6


def orthogonality_error(matrix: np.ndarray) -> float:
    """Frobenius norm of ``M M^T - I``"""
    k = matrix.shape[0]
    return float(np.linalg.norm(matrix @ matrix.T - np.eye(k), ord="fro"))


class OrthogonalMap(BaseModel):
    """k x k matrix X with X X^T = I mapping domain-A user embeddings into domain B"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray = Field(..., description="Square orthogonal matrix, float64")

    @field_validator("matrix", mode="before")
    @classmethod
    def validate_orthogonal(cls, v) -> np.ndarray:
        """Validate squareness, finiteness and orthogonality"""
        m = np.array(v, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"mapping must be a non-empty square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("mapping has non-finite entries")
        error = orthogonality_error(m)
        if error > ORTHOGONALITY_TOL:
            raise ValueError(f"mapping is not orthogonal: ||XX^T - I||_F = {error:.3g}")
        m.setflags(write=False)
        return m

    @property
    def k(self) -> int:
        """Embedding dimension"""
        return self.matrix.shape[0]

    @property
    def inverse(self) -> "OrthogonalMap":
        """Inverse map, which is the transpose"""
        return OrthogonalMap(matrix=self.matrix.T)

    @classmethod
    def identity(cls, k: int) -> "OrthogonalMap":
        """Identity map of dimension k"""
        return cls(matrix=np.eye(k))

    def orthogonality_error(self) -> float:
        """Current ||X X^T - I||_F"""
        return orthogonality_error(self.matrix)
