"""synth: write a coupled synthetic domain pair (or chain) to disk"""

import logging

from dualmetric.commands.common import add_common_flags
from dualmetric.models.run import RunConfig
from dualmetric.storage.files import write_domain, write_mapping, write_registry
from dualmetric.storage.synthetic import generate_synthetic_chain

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="Generate synthetic coupled domains")
    add_common_flags(parser)
    parser.add_argument("--users", type=int, default=None, help="Users per domain")
    parser.add_argument("--items", type=int, default=None, help="Items per domain")
    parser.add_argument("--overlap", type=int, default=None, help="Users shared by all domains")
    parser.add_argument("--dim", type=int, default=None, help="Latent dimension")
    parser.add_argument("--noise", type=float, default=None, help="Rating noise standard deviation")
    parser.add_argument("--ratings-per-user", dest="ratings_per_user", type=int, default=None)
    parser.add_argument("--domains", type=int, default=None, help="Number of chained domains (default 2)")
    parser.set_defaults(func=cmd_synth)


def cmd_synth(cfg: RunConfig) -> int:
    """
    Write ``domain_<tag>/`` directories, ``registry.csv`` and the planted maps.

    The first hop goes to ``planted_map.txt``; further hops of a chain to
    ``planted_map_<from><to>.txt``.
    """
    domains, registry, maps, _ = generate_synthetic_chain(cfg.synthetic_config(), n_domains=cfg.domains)
    out = cfg.out
    for ds in domains:
        write_domain(ds, out / ds.domain_name)
    write_registry(registry, out / "registry.csv")
    for index, hop in enumerate(maps):
        if index == 0:
            write_mapping(hop, out / "planted_map.txt")
        else:
            source, target = chr(ord("a") + index), chr(ord("a") + index + 1)
            write_mapping(hop, out / f"planted_map_{source}{target}.txt")
    logger.info("Synthetic data written to %s (%d domains, %d shared users)", out, len(domains), len(registry))
    return 0
