"""Shared CLI plumbing: flag groups, config merging and domain loading"""

import argparse
import logging

from pydantic import ValidationError

from dualmetric.core.config import merge_overrides, read_config_file
from dualmetric.core.errors import DataValidationError
from dualmetric.models.dataset import DomainDataset, OverlapRegistry
from dualmetric.models.run import CONFIG_KEYS, TRAINING_COMMANDS, RunConfig
from dualmetric.storage.dataset_ops import find_overlap, normalize_ratings
from dualmetric.storage.files import load_domain, read_registry

logger = logging.getLogger(__name__)

# argparse attributes that are not configuration values
_NON_CONFIG = {"func", "command", "config", "log_level"}


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    """--out, --seed and --config; every default is None so config files can fill in"""
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--seed", type=int, default=None, help="Random seed")
    parser.add_argument("--config", default=None, help="key=value config file; flags override it")


def add_domain_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--domain-a", dest="domain_a", default=None, help="Domain-A directory")
    parser.add_argument("--domain-b", dest="domain_b", default=None, help="Domain-B directory")
    parser.add_argument("--registry", default=None, help="Overlap registry CSV (default: identical user ids)")


def add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=None, help="Maximum dual epochs")
    parser.add_argument("--dim", type=int, default=None, help="Embedding dimension")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--lr-rs", dest="lr_rs", type=float, default=None, help="Recommender step size")
    parser.add_argument("--lr-map", dest="lr_map", type=float, default=None, help="Mapping step size")
    parser.add_argument("--autoencoder-epochs", dest="autoencoder_epochs", type=int, default=None)
    parser.add_argument(
        "--autoencoder-min-steps",
        dest="autoencoder_min_steps",
        type=int,
        default=None,
        help="Minimum autoencoder batches (adds epochs on small data)",
    )
    parser.add_argument(
        "--optimizer", choices=["adam", "sgd"], default=None, help="Autoencoder and recommender optimizer"
    )
    parser.add_argument("--folds", type=int, default=None, help="Cross-validation folds")
    parser.add_argument(
        "--feature-mode", dest="feature_mode", choices=["features", "ids_only"], default=None, help="Embedding source"
    )
    parser.add_argument(
        "--no-transfer",
        dest="transfer",
        action="store_const",
        const=False,
        default=None,
        help="Skip mapping and cross-domain phases (no-transfer baseline)",
    )


def add_jobs_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes for independent runs")
    parser.add_argument("--seeds", default=None, help="Comma-separated seeds (default: --seed)")
    parser.add_argument(
        "--cell-folds", dest="cell_folds", type=int, default=None, help="Folds averaged per sweep cell (default 1)"
    )


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge defaults, the optional config file and flags into a ``RunConfig``.

    Raises:
        DataValidationError: On unknown config keys, invalid values, or a
            missing --seed for a training command
    """
    file_values = {}
    if args.config:
        file_values = {key.replace("-", "_"): value for key, value in read_config_file(args.config).items()}
    flag_values = {key: value for key, value in vars(args).items() if key not in _NON_CONFIG}
    merged = merge_overrides(file_values, flag_values, CONFIG_KEYS)
    try:
        cfg = RunConfig(command=args.command, **merged)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise DataValidationError(f"{field}: {first['msg']}") from None
    if cfg.command in TRAINING_COMMANDS and cfg.seed is None:
        raise DataValidationError(f"--seed is required for {cfg.command}")
    return cfg


def load_pair(cfg: RunConfig) -> tuple[DomainDataset, DomainDataset, OverlapRegistry]:
    """
    Load and normalise both domains and resolve the overlap registry.

    Raises:
        DataValidationError: If a domain directory was not given
        InputNotFoundError: If a directory or file does not exist
    """
    if cfg.domain_a is None or cfg.domain_b is None:
        raise DataValidationError(f"{cfg.command} needs --domain-a and --domain-b")
    data_a = normalize_ratings(load_domain(cfg.domain_a))
    data_b = normalize_ratings(load_domain(cfg.domain_b))
    if cfg.registry is not None:
        registry = read_registry(cfg.registry)
        users_a, users_b = set(data_a.user_ids()), set(data_b.user_ids())
        dangling = [pair for pair in registry.pairs if pair[0] not in users_a or pair[1] not in users_b]
        if dangling:
            raise DataValidationError(f"{len(dangling)} registry pairs name unknown users, e.g. {dangling[0]}")
    else:
        registry = find_overlap(data_a, data_b)
    logger.info("Overlap registry: %d pairs", len(registry))
    return data_a, data_b, registry
