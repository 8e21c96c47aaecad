"""Application configuration settings"""

from pathlib import Path
from typing import Any

from pydantic_settings import BaseSettings, SettingsConfigDict

from dualmetric.core.errors import DataValidationError, InputNotFoundError, ParseError


class Settings(BaseSettings):
    """Run defaults loaded from environment variables (prefix ``DML_``)"""

    # Embeddings
    EMBEDDING_DIM: int = 16
    HIDDEN_LAYERS: tuple[int, ...] = (32, 16)
    LR_AUTOENCODER: float = 0.01
    AUTOENCODER_EPOCHS: int = 50
    AUTOENCODER_MIN_STEPS: int = 1500
    OPTIMIZER: str = "adam"

    # Dual loop
    BATCH_SIZE: int = 64
    LR_RS: float = 0.003
    LR_MAP: float = 0.5
    DROPOUT_RATE: float = 0.1
    MAX_EPOCHS: int = 100
    CONVERGENCE_EPS: float = 1e-5
    VALIDATION_FRACTION: float = 0.1

    # Evaluation
    RELEVANCE_THRESHOLD: float = 0.75
    TOP_K: int = 5
    FOLDS: int = 5
    MAX_RECORDS: int = 100_000

    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="DML_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
    )


settings = Settings()


def read_config_file(path: str | Path) -> dict[str, Any]:
    """
    Read a plain ``key=value`` config file.

    Blank lines and lines starting with ``#`` are skipped. Values are returned as
    strings; pydantic coerces them when the owning config model is built.

    Args:
        path: Config file location

    Returns:
        Mapping of key to raw string value

    Raises:
        InputNotFoundError: If the file does not exist
        ParseError: If a line has no ``=`` or repeats a key
    """
    path = Path(path)
    if not path.is_file():
        raise InputNotFoundError(f"config file not found: {path}")

    values: dict[str, Any] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected key=value", path=path, line=line_no)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", path=path, line=line_no)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", path=path, line=line_no)
        values[key] = value
    return values


def merge_overrides(file_values: dict[str, Any], flag_values: dict[str, Any], allowed: set[str]) -> dict[str, Any]:
    """
    Merge config-file values with command-line flags (flags win).

    Flags left at ``None`` are treated as not given.

    Raises:
        DataValidationError: If the config file names a key outside ``allowed``
    """
    unknown = sorted(set(file_values) - allowed)
    if unknown:
        raise DataValidationError(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(file_values)
    merged.update({key: value for key, value in flag_values.items() if value is not None})
    return merged
