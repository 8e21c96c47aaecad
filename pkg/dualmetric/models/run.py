"""Command-line run configuration"""

from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from dualmetric.core.config import settings
from dualmetric.models.dataset import SubsampleMode, SyntheticConfig
from dualmetric.models.training import AutoencoderConfig, FeatureMode, OptimizerKind, TrainConfig

# Commands that train models and therefore need an explicit seed
TRAINING_COMMANDS = {"train", "ablate-overlap", "sweep-dim", "scalability", "feature-modes", "compare-transfer"}


class RunConfig(BaseModel):
    """
    Everything one CLI invocation needs.

    Built from ``Settings`` defaults, then ``--config`` file values, then flags.
    """

    command: str = Field(..., description="Subcommand name")

    # Paths
    domain_a: Optional[Path] = Field(None, description="Domain-A directory")
    domain_b: Optional[Path] = Field(None, description="Domain-B directory")
    registry: Optional[Path] = Field(None, description="Overlap registry file; default links identical user ids")
    checkpoint: Optional[Path] = Field(None, description="Checkpoint directory read by eval; default --out")
    out: Path = Field(Path("out"), description="Output directory")

    seed: Optional[int] = Field(None, description="Seed for every random choice")
    run_id: str = Field("dml", min_length=1, description="Run label in metrics.csv")

    # Training
    epochs: int = Field(settings.MAX_EPOCHS, ge=1)
    dim: int = Field(settings.EMBEDDING_DIM, ge=1, description="Embedding dimension k")
    hidden_layers: tuple[int, ...] = Field(settings.HIDDEN_LAYERS)
    batch_size: int = Field(settings.BATCH_SIZE, ge=1)
    lr_rs: float = Field(settings.LR_RS, gt=0.0)
    lr_map: float = Field(settings.LR_MAP, gt=0.0)
    lr_autoencoder: float = Field(settings.LR_AUTOENCODER, gt=0.0)
    optimizer: OptimizerKind = Field(OptimizerKind(settings.OPTIMIZER), description="adam or sgd")
    autoencoder_epochs: int = Field(settings.AUTOENCODER_EPOCHS, ge=1)
    autoencoder_min_steps: int = Field(settings.AUTOENCODER_MIN_STEPS, ge=0)
    dropout_rate: float = Field(settings.DROPOUT_RATE, ge=0.0, lt=1.0)
    convergence_eps: float = Field(settings.CONVERGENCE_EPS, gt=0.0)
    validation_fraction: float = Field(settings.VALIDATION_FRACTION, ge=0.0, lt=1.0)
    feature_mode: FeatureMode = Field(FeatureMode.FEATURES)
    transfer: bool = Field(True, description="False trains the no-transfer baseline")
    folds: int = Field(settings.FOLDS, ge=2)

    # Sweeps
    counts: Optional[tuple[Union[int, Literal["all"]], ...]] = Field(
        None, description="Overlap counts, 'all' for the full registry; default 0, 8 and all"
    )
    mode: SubsampleMode = Field(SubsampleMode.UNLINK)
    seeds: Optional[tuple[int, ...]] = Field(None, description="Seeds per cell; default the run seed")
    dims: tuple[int, ...] = Field((4, 8, 16, 32, 64, 128, 256))
    sizes: tuple[int, ...] = Field((100, 1_000, 10_000, 100_000, 1_000_000))
    max_records: int = Field(settings.MAX_RECORDS, ge=1)
    jobs: int = Field(1, ge=1, description="Worker processes for independent cells")
    cell_folds: int = Field(1, ge=1, description="Folds averaged per sweep cell; 1 evaluates fold 0 only")

    # Synthetic data
    users: int = Field(500, ge=1)
    items: int = Field(200, ge=1)
    overlap: int = Field(120, ge=0)
    noise: float = Field(0.05, ge=0.0)
    user_feature_dim: int = Field(32, ge=1)
    item_feature_dim: int = Field(32, ge=1)
    ratings_per_user: int = Field(20, ge=1)
    domains: int = Field(2, ge=2, description="Number of chained synthetic domains")

    # Dual NMF demo
    alpha: float = Field(0.3, ge=0.0, le=1.0)
    rank: int = Field(3, ge=1)
    iters: int = Field(500, ge=1)
    rows: int = Field(12, ge=1)
    cols: int = Field(10, ge=1)

    @field_validator("hidden_layers", "counts", "seeds", "dims", "sizes", mode="before")
    @classmethod
    def split_lists(cls, v):
        """Accept comma-separated strings from flags and config files"""
        if isinstance(v, str):
            return tuple(part.strip() for part in v.split(",") if part.strip())
        return v

    @property
    def run_seed(self) -> int:
        return 0 if self.seed is None else self.seed

    @property
    def seed_list(self) -> tuple[int, ...]:
        return self.seeds if self.seeds else (self.run_seed,)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.epochs,
            convergence_eps=self.convergence_eps,
            lr_rs=self.lr_rs,
            optimizer=self.optimizer,
            lr_map=self.lr_map,
            batch_size=self.batch_size,
            dropout_rate=self.dropout_rate,
            hidden_layers=self.hidden_layers,
            validation_fraction=self.validation_fraction,
            feature_mode=self.feature_mode,
            transfer=self.transfer,
            autoencoder=AutoencoderConfig(
                latent_dim=self.dim,
                hidden_layers=self.hidden_layers,
                epochs=self.autoencoder_epochs,
                min_steps=self.autoencoder_min_steps,
                lr=self.lr_autoencoder,
                optimizer=self.optimizer,
                batch_size=self.batch_size,
            ),
            seed=self.run_seed,
        )

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            users_per_domain=self.users,
            items_per_domain=self.items,
            latent_dim=self.dim,
            overlap_count=self.overlap,
            noise_std=self.noise,
            user_feature_dim=self.user_feature_dim,
            item_feature_dim=self.item_feature_dim,
            ratings_per_user=self.ratings_per_user,
            seed=self.run_seed,
        )


CONFIG_KEYS = set(RunConfig.model_fields) - {"command"}
