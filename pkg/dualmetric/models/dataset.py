"""Dataset models: ratings, features, domains and overlap users"""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from dualmetric.models.mapping import OrthogonalMap


class EntityKind(str, Enum):
    """What an embedding or feature vector belongs to"""

    USER = "user"
    ITEM = "item"


class SubsampleMode(str, Enum):
    """How unselected overlap users are handled when thinning the registry"""

    UNLINK = "unlink"
    DISCARD = "discard"


class RatingRecord(BaseModel):
    """One user-item rating"""

    model_config = ConfigDict(frozen=True)

    user_id: str = Field(..., min_length=1, description="Opaque user identifier")
    item_id: str = Field(..., min_length=1, description="Opaque item identifier")
    rating: float = Field(..., description="Rating on the dataset's declared scale")
    timestamp: int = Field(0, ge=0, description="Seconds since epoch, 0 if unknown")

    @field_validator("rating")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Reject NaN and infinities"""
        if not math.isfinite(v):
            raise ValueError("rating must be finite")
        return v


class FeatureVector(BaseModel):
    """Explicit feature vector of a user (dimension m) or item (dimension n)"""

    model_config = ConfigDict(frozen=True)

    owner_id: str = Field(..., min_length=1, description="User or item identifier")
    values: tuple[float, ...] = Field(..., min_length=1, description="Feature values")

    @field_validator("values")
    @classmethod
    def validate_finite(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """Reject NaN and infinities"""
        if not all(math.isfinite(x) for x in v):
            raise ValueError("feature values must be finite")
        return v

    @property
    def dim(self) -> int:
        return len(self.values)


class DomainDataset(BaseModel):
    """Ratings and optional explicit features of one domain"""

    model_config = ConfigDict(frozen=True)

    domain_name: str = Field(..., min_length=1, description="Domain label, e.g. 'book'")
    ratings: tuple[RatingRecord, ...] = Field(default_factory=tuple, description="Rating records")
    user_features: dict[str, FeatureVector] = Field(default_factory=dict, description="user id -> features")
    item_features: dict[str, FeatureVector] = Field(default_factory=dict, description="item id -> features")
    rating_scale: tuple[float, float] = Field((0.0, 1.0), description="(min, max) of the raw rating scale")

    @field_validator("rating_scale")
    @classmethod
    def validate_scale(cls, v: tuple[float, float]) -> tuple[float, float]:
        """Scale must be a proper interval"""
        if not v[0] < v[1]:
            raise ValueError(f"rating_scale min must be below max, got {v}")
        return v

    @field_validator("user_features", "item_features")
    @classmethod
    def validate_feature_dims(cls, v: dict[str, FeatureVector]) -> dict[str, FeatureVector]:
        """All feature vectors of one entity kind share a dimension and are keyed by owner"""
        dims = {fv.dim for fv in v.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
        for key, fv in v.items():
            if key != fv.owner_id:
                raise ValueError(f"feature key {key!r} does not match owner_id {fv.owner_id!r}")
        return v

    @model_validator(mode="after")
    def validate_records(self) -> "DomainDataset":
        """No duplicate (user, item) pairs; feature maps cover every rated id when present"""
        seen: set[tuple[str, str]] = set()
        for record in self.ratings:
            key = (record.user_id, record.item_id)
            if key in seen:
                raise ValueError(f"duplicate rating for user {record.user_id!r} item {record.item_id!r}")
            seen.add(key)
        if self.user_features:
            missing = {r.user_id for r in self.ratings} - self.user_features.keys()
            if missing:
                raise ValueError(f"users without features: {sorted(missing)[:5]}")
        if self.item_features:
            missing = {r.item_id for r in self.ratings} - self.item_features.keys()
            if missing:
                raise ValueError(f"items without features: {sorted(missing)[:5]}")
        return self

    @property
    def has_features(self) -> bool:
        return bool(self.user_features) and bool(self.item_features)

    def user_ids(self) -> list[str]:
        """Sorted ids of users with at least one rating"""
        return sorted({r.user_id for r in self.ratings})

    def item_ids(self) -> list[str]:
        """Sorted ids of items with at least one rating"""
        return sorted({r.item_id for r in self.ratings})

    def with_ratings(self, ratings) -> "DomainDataset":
        """Copy with a different rating list, keeping features and scale"""
        return DomainDataset.model_construct(
            domain_name=self.domain_name,
            ratings=tuple(ratings),
            user_features=self.user_features,
            item_features=self.item_features,
            rating_scale=self.rating_scale,
        )


class OverlapRegistry(BaseModel):
    """Pairs of (domain-A user id, domain-B user id) referring to the same person"""

    model_config = ConfigDict(frozen=True)

    pairs: tuple[tuple[str, str], ...] = Field(default_factory=tuple, description="Linked user id pairs")

    @field_validator("pairs")
    @classmethod
    def validate_unique(cls, v: tuple[tuple[str, str], ...]) -> tuple[tuple[str, str], ...]:
        """Each side appears at most once"""
        if len({a for a, _ in v}) != len(v) or len({b for _, b in v}) != len(v):
            raise ValueError("overlap pairs must be unique on both sides")
        return v

    def __len__(self) -> int:
        return len(self.pairs)

    def swapped(self) -> "OverlapRegistry":
        """Registry with components swapped (B, A)"""
        return OverlapRegistry(pairs=tuple((b, a) for a, b in self.pairs))


class OverlapEditPlan(BaseModel):
    """Result of thinning an overlap registry, applied to datasets by ``apply_edit_plan``"""

    model_config = ConfigDict(frozen=True)

    mode: SubsampleMode = Field(..., description="unlink keeps records, discard deletes them")
    retained: tuple[tuple[str, str], ...] = Field(default_factory=tuple, description="Pairs kept linked")
    dropped: tuple[tuple[str, str], ...] = Field(default_factory=tuple, description="Pairs unlinked or discarded")


class SyntheticConfig(BaseModel):
    """Parameters of the coupled two-domain synthetic generator"""

    users_per_domain: int = Field(500, ge=1, description="Users per domain")
    items_per_domain: int = Field(200, ge=1, description="Items per domain")
    latent_dim: int = Field(16, ge=1, description="Latent dimension k")
    overlap_count: int = Field(120, ge=0, description="Users present in both domains")
    noise_std: float = Field(0.05, ge=0.0, description="Rating noise standard deviation")
    user_feature_dim: int = Field(32, ge=1, description="User feature dimension m")
    item_feature_dim: int = Field(32, ge=1, description="Item feature dimension n")
    ratings_per_user: int = Field(20, ge=1, description="Items rated by each user")
    feature_noise_std: float = Field(0.01, ge=0.0, description="Noise added to explicit features")
    seed: int = Field(0, description="Random seed")

    @model_validator(mode="after")
    def validate_counts(self) -> "SyntheticConfig":
        """Overlap fits into the user population and each user can rate distinct items"""
        if self.overlap_count > self.users_per_domain:
            raise ValueError("overlap_count cannot exceed users_per_domain")
        if self.ratings_per_user > self.items_per_domain:
            raise ValueError("ratings_per_user cannot exceed items_per_domain")
        return self


class SyntheticPair(BaseModel):
    """Output of the synthetic generator: two domains, their overlap and the planted map"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain_a: DomainDataset
    domain_b: DomainDataset
    registry: OverlapRegistry
    planted_map: OrthogonalMap
    latents: dict[str, dict[str, np.ndarray]] = Field(
        default_factory=dict,
        description="Ground-truth latents keyed by 'a_users', 'a_items', 'b_users', 'b_items', then by id",
    )
