"""
Command handlers for the CLI, one module per subcommand.

Each handler takes a validated ExperimentConfig and a ReplicaPool, writes its
outputs through the exporters and returns the process exit status.
"""

from typing import Tuple

from app.errors import ConfigurationError
from app.models.experiment import ExperimentConfig
from app.models.velocity import TumbleKind


def single_point(config: ExperimentConfig) -> Tuple[TumbleKind, float]:
    """The one (kind, ell) point of a command that does not sweep."""
    grid = config.grid()
    if len(grid) != 1:
        raise ConfigurationError(f"{config.command} takes a single parameter point, got {len(grid)}")
    return grid[0]


def single_size(config: ExperimentConfig) -> int:
    if len(config.L) != 1:
        raise ConfigurationError(f"{config.command} takes a single --L, got {config.L}")
    return config.L[0]


def point_columns(kind: TumbleKind, ell: float) -> dict:
    return {"kind": kind.label, **kind.params(), "ell": ell}
