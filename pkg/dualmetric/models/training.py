"""Training configuration and loss history models"""

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator

from dualmetric.core.config import settings


class FeatureMode(str, Enum):
    """Where latent embeddings come from"""

    FEATURES = "features"
    IDS_ONLY = "ids_only"


class OptimizerKind(str, Enum):
    """Gradient method of the autoencoders and recommenders"""

    ADAM = "adam"
    SGD = "sgd"


class AutoencoderConfig(BaseModel):
    """Autoencoder architecture and optimisation settings"""

    latent_dim: int = Field(settings.EMBEDDING_DIM, ge=1, description="Embedding dimension k")
    hidden_layers: tuple[int, ...] = Field(settings.HIDDEN_LAYERS, description="Encoder hidden widths; decoder mirrors them")
    epochs: int = Field(settings.AUTOENCODER_EPOCHS, ge=1, description="Passes over the feature set")
    lr: float = Field(settings.LR_AUTOENCODER, gt=0.0, description="Optimizer step size")
    optimizer: OptimizerKind = Field(OptimizerKind(settings.OPTIMIZER), description="adam or sgd")
    min_steps: int = Field(
        settings.AUTOENCODER_MIN_STEPS, ge=0, description="Lower bound on batches taken; adds epochs on small sets"
    )
    batch_size: int = Field(settings.BATCH_SIZE, ge=1, description="Mini-batch size")
    seed: int = Field(0, description="Initialisation and shuffling seed")

    @field_validator("hidden_layers")
    @classmethod
    def validate_widths(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Hidden widths must be positive"""
        if any(width < 1 for width in v):
            raise ValueError(f"hidden layer widths must be positive, got {v}")
        return v


class TrainConfig(BaseModel):
    """Settings of the dual training loop"""

    max_epochs: int = Field(settings.MAX_EPOCHS, ge=1, description="Upper bound on dual epochs")
    convergence_eps: float = Field(settings.CONVERGENCE_EPS, gt=0.0, description="Stop when |delta total loss| < eps")
    lr_rs: float = Field(settings.LR_RS, gt=0.0, description="Recommender step size")
    optimizer: OptimizerKind = Field(OptimizerKind(settings.OPTIMIZER), description="Recommender optimizer")
    lr_map: float = Field(settings.LR_MAP, gt=0.0, description="Mapping step size (per-pair mean gradient)")
    batch_size: int = Field(settings.BATCH_SIZE, ge=1, description="Mini-batch size for every phase")
    dropout_rate: float = Field(settings.DROPOUT_RATE, ge=0.0, lt=1.0, description="Hidden-layer dropout")
    hidden_layers: tuple[int, ...] = Field(settings.HIDDEN_LAYERS, description="Recommender hidden widths")
    validation_fraction: float = Field(
        settings.VALIDATION_FRACTION, ge=0.0, lt=1.0, description="Share of training ratings held out for reporting"
    )
    feature_mode: FeatureMode = Field(FeatureMode.FEATURES, description="features or ids_only")
    transfer: bool = Field(True, description="False skips mapping and cross-domain phases (no-transfer baseline)")
    autoencoder: AutoencoderConfig = Field(default_factory=AutoencoderConfig, description="Embedding stage settings")
    seed: int = Field(0, description="Seed for every random choice in the run")

    @property
    def latent_dim(self) -> int:
        return self.autoencoder.latent_dim


class LossRecord(BaseModel):
    """Mean losses of one dual epoch"""

    model_config = ConfigDict(frozen=True)

    epoch: int = Field(..., ge=1)
    L_A: float = Field(..., ge=0.0, description="Within-domain loss, domain A")
    L_B: float = Field(..., ge=0.0, description="Within-domain loss, domain B")
    L_oA: float = Field(..., ge=0.0, description="Primal alignment loss")
    L_oB: float = Field(..., ge=0.0, description="Dual alignment loss")
    L_Astar: float = Field(..., ge=0.0, description="Cross-domain loss, domain A")
    L_Bstar: float = Field(..., ge=0.0, description="Cross-domain loss, domain B")
    val_A: float = Field(..., ge=0.0, description="Validation RMSE, domain A")
    val_B: float = Field(..., ge=0.0, description="Validation RMSE, domain B")

    @field_validator("L_A", "L_B", "L_oA", "L_oB", "L_Astar", "L_Bstar", "val_A", "val_B")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Recorded losses are finite"""
        if not math.isfinite(v):
            raise ValueError("loss must be finite")
        return v

    @property
    def total(self) -> float:
        """Sum of the six training loss terms (convergence is monitored on this)"""
        return self.L_A + self.L_B + self.L_oA + self.L_oB + self.L_Astar + self.L_Bstar

    def as_row(self) -> list:
        return [self.epoch, self.L_A, self.L_B, self.L_oA, self.L_oB, self.L_Astar, self.L_Bstar, self.val_A, self.val_B]


HISTORY_HEADER = ["epoch", "L_A", "L_B", "L_oA", "L_oB", "L_Astar", "L_Bstar", "val_A", "val_B"]
