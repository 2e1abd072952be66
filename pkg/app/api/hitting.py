"""
Hitting Command

Closed-form hitting and return times against Monte Carlo, one row per query.
"""

import structlog

from app.config import settings
from app.models.experiment import ExperimentConfig
from app.models.hitting import oracle_frame
from app.services.exporters import write_frame
from app.services.hitting_times import hitting_oracle_table
from app.services.replica_pool import ReplicaPool

logger = structlog.get_logger(__name__)


def cmd_hitting(config: ExperimentConfig, pool: ReplicaPool) -> int:
    replicas = config.replicas or settings.hitting_replicas
    rows = []
    for kind, ell in config.grid():
        rows += hitting_oracle_table(kind, ell, replicas, config.seed, pool)
    agreeing = sum(row.agrees for row in rows)
    logger.info("hitting table", rows=len(rows), within_3se=agreeing)
    write_frame(oracle_frame(rows), config.output)
    return 0
