"""
Mixing Command

Mixing-time estimates over the Cartesian product of rates and lengths.
"""

from app.config import settings
from app.models.experiment import ExperimentConfig
from app.services.exporters import write_frame, write_json
from app.services.mixing import MixingEstimator, replica_frame
from app.services.replica_pool import ReplicaPool


def cmd_mixing(config: ExperimentConfig, pool: ReplicaPool) -> int:
    replicas = config.replicas or settings.replicas
    estimator = MixingEstimator(pool, keep_replicas=config.replica_table is not None)
    estimates = []
    for kind, ell in config.grid():
        estimates.append(
            estimator.estimate(kind, ell, config.epsilon, replicas, config.seed,
                               tv_replicas=0 if config.quick else None, bins=config.bins)
        )
    write_json([e.model_dump(mode="json") for e in estimates], config.output)
    if config.replica_table:
        write_frame(replica_frame(estimator.replica_rows), config.replica_table)
    return 0
