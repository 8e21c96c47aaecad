"""train and eval: fit the dual pipeline on two domains and score the checkpoint"""

import logging

from dualmetric.commands.common import add_common_flags, add_domain_flags, add_training_flags, load_pair
from dualmetric.core.log_format import log_metrics
from dualmetric.evaluation.harness import evaluate_pair, split_pair, write_metrics
from dualmetric.learning.trainer import load_checkpoint, save_checkpoint, train
from dualmetric.models.dataset import DomainDataset
from dualmetric.models.run import RunConfig
from dualmetric.storage.files import read_ratings, write_ratings

logger = logging.getLogger(__name__)

TEST_FILES = ("test_a.csv", "test_b.csv")


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train the dual pipeline and write checkpoints")
    add_common_flags(parser)
    add_domain_flags(parser)
    add_training_flags(parser)
    parser.set_defaults(func=cmd_train)

    parser = subparsers.add_parser("eval", help="Score a checkpoint on its held-out ratings")
    add_common_flags(parser)
    parser.add_argument("--checkpoint", default=None, help="Checkpoint directory (default: --out)")
    parser.add_argument("--run-id", dest="run_id", default=None, help="Run label in metrics.csv")
    parser.set_defaults(func=cmd_eval)


def cmd_train(cfg: RunConfig) -> int:
    """
    Hold out fold 0 of each domain, train on the rest, write checkpoints.

    Writes the checkpoint layout of ``save_checkpoint`` (including
    ``history.csv``) plus ``test_a.csv`` and ``test_b.csv`` to ``--out``.
    """
    data_a, data_b, registry = load_pair(cfg)
    train_cfg = cfg.train_config()
    train_a, test_a, train_b, test_b = split_pair(data_a, data_b, cfg.folds, 0, train_cfg.seed)
    state = train(train_a, train_b, registry, train_cfg)
    save_checkpoint(state, cfg.out)
    for name, test in zip(TEST_FILES, (test_a, test_b)):
        write_ratings(test.ratings, cfg.out / name)
    last = state.history[-1]
    log_metrics(
        logger,
        logging.INFO,
        "Training run complete",
        epochs=state.epoch,
        converged=state.converged,
        val_A=last.val_A,
        val_B=last.val_B,
    )
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    """Load a checkpoint and its test splits, write ``metrics.csv`` to ``--out``"""
    checkpoint = cfg.checkpoint or cfg.out
    state = load_checkpoint(checkpoint)
    tests = [
        DomainDataset(domain_name=name, ratings=tuple(read_ratings(checkpoint / filename)))
        for name, filename in zip(state.domains, TEST_FILES)
    ]
    reports = evaluate_pair(state, tests[0], tests[1])
    path = write_metrics({cfg.run_id: reports}, cfg.out / "metrics.csv")
    for report in reports:
        log_metrics(
            logger,
            logging.INFO,
            f"Test metrics {report.domain}",
            rmse=report.rmse,
            mae=report.mae,
            precision_at_k=report.precision_at_k,
            recall_at_k=report.recall_at_k,
            n_test=report.n_test,
        )
    logger.info("Metrics written to %s", path)
    return 0

