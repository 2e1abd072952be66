"""
Command-line entry point.

    python -m app.main simulate --kind citp --omega 1 --ell 1 --horizon 100 --seed 7
    python -m app.main invariant --kind dftp --alpha 1 --beta 1 --L 50
    python -m app.main converge --kind citp --omega 1 --L 8,32,128 --replicas 200 --seed 1
    python -m app.main mixing --kind citp --omega 0.25,1,4 --ell 0.5,1 --seed 3
    python -m app.main hitting --kind cftp --alpha 1 --beta 1 --seed 5
    python -m app.main verify --quick

Exit status: 0 on success, 2 on invalid configuration, 1 on any other failure.
"""

import argparse
import sys
from typing import Callable, Dict, List, Optional

import structlog
from pydantic import ValidationError

from app.api.converge import cmd_converge
from app.api.hitting import cmd_hitting
from app.api.invariant import cmd_invariant
from app.api.mixing import cmd_mixing
from app.api.simulate import cmd_simulate
from app.api.verify import cmd_verify
from app.config import settings
from app.errors import ConfigurationError, JammingError
from app.logging_config import configure_logging
from app.models.experiment import ExperimentConfig
from app.services.exporters import write_config
from app.services.replica_pool import ReplicaPool

logger = structlog.get_logger(__name__)

COMMANDS: Dict[str, Callable[[ExperimentConfig, ReplicaPool], int]] = {
    "simulate": cmd_simulate,
    "invariant": cmd_invariant,
    "converge": cmd_converge,
    "mixing": cmd_mixing,
    "hitting": cmd_hitting,
    "verify": cmd_verify,
}


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(parser: argparse.ArgumentParser, monte_carlo: bool = True) -> None:
    parser.add_argument("--kind", choices=["citp", "cftp", "ditp", "dftp"], default="citp")
    parser.add_argument("--omega", type=_float_list, default=[], help="Tumble rate(s), comma-separated")
    parser.add_argument("--alpha", type=_float_list, default=[], help="Rate(s) of leaving +-1")
    parser.add_argument("--beta", type=_float_list, default=[], help="Rate(s) of leaving 0")
    parser.add_argument("--ell", type=_float_list, default=[1.0], help="Torus length(s)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--output", "-o", default=None, help="Output path (stdout when omitted)")
    parser.add_argument("--x0", type=float, default=0.0, help="Initial separation")
    parser.add_argument("--s1", type=int, default=1, help="Initial velocity of particle 1")
    parser.add_argument("--s2", type=int, default=1, help="Initial velocity of particle 2")
    if monte_carlo:
        parser.add_argument("--replicas", type=int, default=None)
        parser.add_argument("--workers", type=int, default=None, help="Worker processes (RTP_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtp", description="Jamming run-and-tumble toolkit")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-format", choices=["console", "json"], default=None)
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    simulate = subparsers.add_parser("simulate", help="Write one exact trajectory as CSV")
    _add_common(simulate, monte_carlo=False)
    simulate.add_argument("--L", type=_int_list, default=[], help="Lattice size for ditp/dftp")
    simulate.add_argument("--horizon", type=float, default=None)

    invariant = subparsers.add_parser("invariant", help="Invariant measure or lattice stationary vector")
    _add_common(invariant, monte_carlo=False)
    invariant.add_argument("--L", type=_int_list, default=[])
    invariant.add_argument("--bins", type=int, default=settings.occupation_bins)
    invariant.add_argument("--compare-horizon", type=float, default=None,
                           help="Also compare with the occupation of a run of this length")

    converge = subparsers.add_parser("converge", help="Lattice-to-continuum convergence table")
    _add_common(converge)
    converge.add_argument("--L", type=_int_list, required=True, help="Lattice sizes, comma-separated")
    converge.add_argument("--T", type=float, default=1.0, help="Deviation window [0, T]")
    converge.add_argument("--epsilon", type=float, default=0.1)

    mixing = subparsers.add_parser("mixing", help="Mixing-time estimates over a parameter grid")
    _add_common(mixing)
    mixing.add_argument("--epsilon", type=float, default=0.25)
    mixing.add_argument("--bins", type=int, default=settings.occupation_bins)
    mixing.add_argument("--replica-table", default=None, help="Also write per-replica coupling times")
    mixing.add_argument("--quick", action="store_true", help="Skip the TV-based estimate")

    hitting = subparsers.add_parser("hitting", help="Closed-form hitting times against Monte Carlo")
    _add_common(hitting)

    verify = subparsers.add_parser("verify", help="Run the acceptance suite")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--output", "-o", default=None)
    verify.add_argument("--workers", type=int, default=None)
    verify.add_argument("--quick", action="store_true", help="Reduced Monte Carlo budgets")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2

    values = {k: v for k, v in vars(args).items() if k not in ("log_level", "log_format") and v is not None}
    try:
        config = ExperimentConfig(**values)
    except (ValidationError, ConfigurationError) as e:
        logger.error("invalid configuration", command=args.command, error=str(e))
        return 2

    try:
        pool = ReplicaPool(workers=config.workers)
        write_config(config, settings.output_dir)
        return COMMANDS[config.command](config, pool)
    except ConfigurationError as e:
        logger.error("invalid configuration", command=config.command, error=str(e))
        return 2
    except JammingError as e:
        logger.error("command failed", command=config.command, error=str(e), error_type=type(e).__name__)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
