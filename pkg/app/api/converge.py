"""
Converge Command

Per lattice size: quantiles of the coupled lattice-to-continuum deviation on
[0, T], the exceedance probability with its bound, and W1 between the
embedded lattice stationary law and the invariant measure.
"""

import pandas as pd

from app.api import point_columns
from app.config import settings
from app.models.experiment import ExperimentConfig
from app.models.velocity import VelocityPair
from app.services.convergence import ConvergenceStudy
from app.services.exporters import write_frame
from app.services.replica_pool import ReplicaPool


def cmd_converge(config: ExperimentConfig, pool: ReplicaPool) -> int:
    replicas = config.replicas or settings.replicas
    grid = config.grid()
    frames = []
    for kind, ell in grid:
        study = ConvergenceStudy(kind, ell, pool)
        sigma = kind.validate_pair(VelocityPair(config.s1, config.s2))
        frame = study.table(config.L, config.T, config.epsilon, replicas, config.seed, config.x0, sigma)
        if len(grid) > 1:
            for i, (name, value) in enumerate(point_columns(kind, ell).items()):
                frame.insert(i, name, value)
        frames.append(frame)
    write_frame(pd.concat(frames, ignore_index=True), config.output)
    return 0
