"""
Simulate Command

Writes one exact trajectory: breakpoints of the continuum separation process
or the changes-only event list of the lattice chain.
"""

import structlog

from app.api import single_point, single_size
from app.models.experiment import ExperimentConfig
from app.models.lattice import LatticeParams, LatticeState
from app.models.pdmp import ContParams, ContState
from app.models.velocity import VelocityPair
from app.services.exporters import write_frame
from app.services.lattice_process import initial_site, simulate_discrete
from app.services.pdmp_process import log_run_summary, simulate_continuous
from app.services.replica_pool import ReplicaPool, replica_rng

logger = structlog.get_logger(__name__)


def cmd_simulate(config: ExperimentConfig, pool: ReplicaPool) -> int:
    kind, ell = single_point(config)
    sigma = kind.validate_pair(VelocityPair(config.s1, config.s2))
    rng = replica_rng(config.seed, 0)

    if config.lattice:
        L = single_size(config)
        params = LatticeParams(L=L, ell=ell, kind=kind)
        init = LatticeState(initial_site(config.x0, L, ell), sigma)
        trajectory = simulate_discrete(params, init, config.horizon, rng)
        logger.info("lattice run", L=L, kind=kind.label, events=len(trajectory.times), horizon=config.horizon)
        write_frame(trajectory.to_frame(), config.output)
        return 0

    params = ContParams(ell, kind)
    run = simulate_continuous(params, ContState(config.x0, sigma), config.horizon, rng)
    log_run_summary(run)
    write_frame(run.path.to_frame(), config.output)
    return 0
