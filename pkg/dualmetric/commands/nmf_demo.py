"""nmf-demo: run the dual factorization on a random instance and check monotonicity"""

import logging

import numpy as np

from dualmetric.commands.common import add_common_flags
from dualmetric.core.log_format import log_metrics
from dualmetric.learning.nmf import (
    check_conditions,
    check_coupled_drift,
    check_monotone,
    max_relative_rise,
    relative_change,
    run_dual_nmf,
)
from dualmetric.models.run import RunConfig
from dualmetric.storage.files import NMF_HISTORY_HEADER, write_csv

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("nmf-demo", help="Dual NMF convergence demonstrator")
    add_common_flags(parser)
    parser.add_argument("--alpha", type=float, default=None, help="Mixing weight (must be below 0.5)")
    parser.add_argument("--rank", type=int, default=None, help="Factorization rank")
    parser.add_argument("--iters", type=int, default=None, help="Maximum iterations")
    parser.add_argument("--rows", type=int, default=None, help="Rows of each rating matrix")
    parser.add_argument("--cols", type=int, default=None, help="Columns of each rating matrix")
    parser.set_defaults(func=cmd_nmf_demo)


def random_instance(rows: int, cols: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two uniform [0, 1] rating matrices and a random permutation acting on rows"""
    rng = np.random.default_rng(seed)
    v_a = rng.random((rows, cols))
    v_b = rng.random((rows, cols))
    x = np.eye(rows)[rng.permutation(rows)]
    return v_a, v_b, x


def _write_conditions(path, raw, perturbed) -> None:
    rows = [
        [name, str(getattr(raw, name)).lower(), "" if perturbed is None else str(getattr(perturbed, name)).lower()]
        for name in ("a", "b", "c")
    ]
    write_csv(path, ["condition", "raw", "perturbed"], rows)


def cmd_nmf_demo(cfg: RunConfig) -> int:
    """
    Write ``conditions.csv`` and ``nmf_history.csv`` to ``--out``.

    Each history row holds the eliminated objective, its step change and the
    coupled objective of the same iterate.

    Raises:
        ConditionViolationError: If condition (a) fails (alpha >= 0.5)
        MonotonicityError: If the eliminated objective ever increased or the
            coupled objective left its drift bound
    """
    v_a, v_b, x = random_instance(cfg.rows, cfg.cols, cfg.run_seed)
    raw = check_conditions(v_a, v_b, x, cfg.alpha)
    if not raw.a:
        _write_conditions(cfg.out / "conditions.csv", raw, None)

    state = run_dual_nmf(v_a, v_b, x, cfg.alpha, cfg.rank, cfg.iters, seed=cfg.run_seed, k_scale=1.0)
    _write_conditions(cfg.out / "conditions.csv", state.raw_conditions, state.conditions)

    history, coupled = state.loss_history, state.coupled_history
    deltas = [0.0] + [current - previous for previous, current in zip(history[:-1], history[1:])]
    write_csv(
        cfg.out / "nmf_history.csv",
        NMF_HISTORY_HEADER,
        (
            [step, repr(value), repr(delta), repr(joint)]
            for step, (value, delta, joint) in enumerate(zip(history, deltas, coupled), start=1)
        ),
    )
    log_metrics(
        logger,
        logging.INFO,
        "Dual NMF demo",
        alpha=cfg.alpha,
        shift=state.shift,
        iterations=state.iterations,
        objective=history[-1],
        coupled=coupled[-1],
        coupled_max_rise=max_relative_rise(coupled),
        relative_change=relative_change(history),
    )
    check_monotone(history)
    check_coupled_drift(coupled, cfg.alpha)
    return 0
