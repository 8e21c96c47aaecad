"""Latent embedding model"""

import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

# Slack on the unit-ball constraint ||e||^2 <= 1
UNIT_BALL_TOL = 1e-9


class LatentEmbedding(BaseModel):
    """k-dimensional embedding of a user or item, constrained to the unit ball"""

    model_config = ConfigDict(frozen=True)

    owner_id: str = Field(..., description="User or item identifier")
    vector: tuple[float, ...] = Field(..., min_length=1, description="Embedding coordinates")

    @field_validator("vector")
    @classmethod
    def validate_unit_ball(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """Finite and inside the unit ball"""
        if not all(math.isfinite(x) for x in v):
            raise ValueError("embedding must be finite")
        squared = sum(x * x for x in v)
        if squared > 1.0 + UNIT_BALL_TOL:
            raise ValueError(f"embedding outside unit ball: ||e||^2 = {squared:.12g}")
        return v

    @property
    def dim(self) -> int:
        return len(self.vector)
