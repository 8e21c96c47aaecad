"""Experiment commands: overlap ablation, dimension and size sweeps, mode comparisons"""

import logging

import numpy as np

from dualmetric.commands.common import add_common_flags, add_domain_flags, add_jobs_flag, add_training_flags, load_pair
from dualmetric.core.log_format import log_metrics
from dualmetric.evaluation import harness
from dualmetric.evaluation.metrics import improvement_pct, paired_significance
from dualmetric.models.report import METRIC_DIRECTIONS, AblationCurve
from dualmetric.models.run import RunConfig
from dualmetric.storage.files import write_csv

logger = logging.getLogger(__name__)

IMPROVEMENT_HEADER = ["domain", "metric", "dml", "baseline", "improved_pct", "p_value"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("ablate-overlap", help="Metrics against the number of linked overlap users")
    _experiment_flags(parser)
    parser.add_argument("--counts", default=None, help="Comma-separated overlap counts (default: 0,8,all)")
    parser.add_argument("--mode", choices=["unlink", "discard"], default=None, help="Fate of dropped overlap users")
    parser.set_defaults(func=cmd_ablate_overlap)

    parser = subparsers.add_parser("sweep-dim", help="Metrics against the embedding dimension")
    _experiment_flags(parser)
    parser.add_argument("--dims", default=None, help="Comma-separated dimensions")
    parser.set_defaults(func=cmd_sweep_dim)

    parser = subparsers.add_parser("scalability", help="Training time against synthetic data size")
    add_common_flags(parser)
    add_training_flags(parser)
    add_jobs_flag(parser)
    parser.add_argument("--sizes", default=None, help="Comma-separated record counts")
    parser.add_argument("--max-records", dest="max_records", type=int, default=None, help="Skip larger sizes")
    parser.set_defaults(func=cmd_scalability)

    parser = subparsers.add_parser("feature-modes", help="Explicit features against ids only")
    _experiment_flags(parser)
    parser.set_defaults(func=cmd_feature_modes)

    parser = subparsers.add_parser("compare-transfer", help="Dual pipeline against the no-transfer baseline")
    _experiment_flags(parser)
    parser.set_defaults(func=cmd_compare_transfer)


def _experiment_flags(parser) -> None:
    add_common_flags(parser)
    add_domain_flags(parser)
    add_training_flags(parser)
    add_jobs_flag(parser)


def _log_curve(curve: AblationCurve, domains: tuple[str, ...]) -> None:
    for x in curve.x_values:
        for domain in domains:
            log_metrics(
                logger,
                logging.INFO,
                f"{curve.name} x={x:g} {domain}",
                rmse=curve.mean_metric(x, domain, "rmse"),
                mae=curve.mean_metric(x, domain, "mae"),
                precision_at_k=curve.mean_metric(x, domain, "precision_at_k"),
                recall_at_k=curve.mean_metric(x, domain, "recall_at_k"),
            )


def _finish(cfg: RunConfig, curve: AblationCurve, domains: tuple[str, ...]) -> int:
    path = harness.write_curve(curve, cfg.out / "curve.csv")
    _log_curve(curve, domains)
    logger.info("Curve written to %s", path)
    return 0


def cmd_ablate_overlap(cfg: RunConfig) -> int:
    data_a, data_b, registry = load_pair(cfg)
    if cfg.counts is None:
        counts = sorted({0, min(8, len(registry)), len(registry)})
    else:
        counts = sorted({len(registry) if count == "all" else count for count in cfg.counts})
    curve = harness.ablate_overlap(
        data_a,
        data_b,
        registry,
        counts,
        cfg.mode,
        cfg.seed_list,
        cfg.train_config(),
        jobs=cfg.jobs,
        eval_folds=cfg.cell_folds,
    )
    return _finish(cfg, curve, (data_a.domain_name, data_b.domain_name))


def cmd_sweep_dim(cfg: RunConfig) -> int:
    data_a, data_b, registry = load_pair(cfg)
    curve = harness.sweep_dimension(
        data_a,
        data_b,
        registry,
        cfg.dims,
        cfg.seed_list,
        cfg.train_config(),
        jobs=cfg.jobs,
        eval_folds=cfg.cell_folds,
    )
    return _finish(cfg, curve, (data_a.domain_name, data_b.domain_name))


def cmd_scalability(cfg: RunConfig) -> int:
    """Curve plus ``scaling.csv`` (size, mean seconds) and the fitted log-log exponent"""
    curve = harness.sweep_scalability(
        cfg.sizes,
        cfg.seed_list,
        cfg.train_config(),
        cfg.synthetic_config(),
        cfg.max_records,
        jobs=cfg.jobs,
        eval_folds=cfg.cell_folds,
    )
    harness.write_curve(curve, cfg.out / "curve.csv")
    rows = [
        [int(x), repr(float(np.mean([p.seconds for p in curve.points if p.x == x])))] for x in curve.x_values
    ]
    write_csv(cfg.out / "scaling.csv", ["records", "seconds"], rows)
    if len(curve.x_values) >= 2:
        logger.info("Scaling exponent: seconds ~ records^%.3f", harness.scaling_exponent(curve))
    return 0


def cmd_feature_modes(cfg: RunConfig) -> int:
    data_a, data_b, registry = load_pair(cfg)
    curve = harness.feature_mode_comparison(
        data_a, data_b, registry, cfg.train_config(), cfg.seed_list, cfg.jobs, eval_folds=cfg.cell_folds
    )
    return _finish(cfg, curve, (data_a.domain_name, data_b.domain_name))


def cmd_compare_transfer(cfg: RunConfig) -> int:
    """Curve plus ``improvement.csv``: seed-mean metrics, improvement and paired p-value per domain"""
    data_a, data_b, registry = load_pair(cfg)
    curve = harness.transfer_comparison(
        data_a, data_b, registry, cfg.train_config(), cfg.seed_list, cfg.jobs, eval_folds=cfg.cell_folds
    )
    ours_x, baseline_x = harness.TRANSFER_X[True], harness.TRANSFER_X[False]
    rows = []
    for domain in (data_a.domain_name, data_b.domain_name):
        for metric, direction in METRIC_DIRECTIONS.items():
            ours = harness.seed_values(curve, ours_x, domain, metric)
            baseline = harness.seed_values(curve, baseline_x, domain, metric)
            mean_ours, mean_baseline = float(np.mean(ours)), float(np.mean(baseline))
            p_value = paired_significance(ours, baseline).p_value if len(ours) >= 2 else float("nan")
            improved = improvement_pct(mean_ours, mean_baseline, direction) if mean_baseline else float("nan")
            rows.append([domain, metric, repr(mean_ours), repr(mean_baseline), repr(improved), repr(p_value)])
    write_csv(cfg.out / "improvement.csv", IMPROVEMENT_HEADER, rows)
    return _finish(cfg, curve, (data_a.domain_name, data_b.domain_name))
