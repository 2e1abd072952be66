"""
Verify Command

Runs the acceptance suite and writes its report; the exit status is zero only
when every check passes.
"""

import structlog

from app.models.experiment import ExperimentConfig
from app.services.acceptance import DEFAULT_SEED, AcceptanceSuite
from app.services.exporters import write_json
from app.services.replica_pool import ReplicaPool

logger = structlog.get_logger(__name__)


def cmd_verify(config: ExperimentConfig, pool: ReplicaPool) -> int:
    seed = DEFAULT_SEED if config.seed is None else config.seed
    results = AcceptanceSuite(seed=seed, quick=config.quick, pool=pool).run()
    write_json([r.model_dump(mode="json") for r in results], config.output)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("acceptance failed", checks=failed)
        return 1
    logger.info("acceptance passed", checks=len(results))
    return 0
