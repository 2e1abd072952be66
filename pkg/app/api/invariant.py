"""
Invariant Command

Continuum kinds: the closed-form invariant measure as JSON. Lattice kinds: the
stationary vector as CSV. With a comparison horizon, also the occupation of a
long run next to the exact law, with their total variation distance.
"""

from pathlib import Path

import numpy as np
import structlog

from app.api import single_point, single_size
from app.config import settings
from app.models.experiment import ExperimentConfig
from app.models.lattice import LatticeParams, LatticeState
from app.models.pdmp import ContParams, ContState
from app.models.velocity import VelocityPair
from app.services.distances import tv_distance
from app.services.exporters import write_frame, write_json
from app.services.invariant_measures import discretize, invariant_measure
from app.services.lattice_process import (
    initial_site,
    lattice_occupation,
    simulate_discrete,
    stationary_distribution,
)
from app.services.pdmp_process import OccupationAccumulator, simulate_continuous
from app.services.replica_pool import ReplicaPool, replica_rng

logger = structlog.get_logger(__name__)


def _compare_path(config: ExperimentConfig) -> str:
    if config.output and config.output != "-":
        return f"{config.output}.compare.csv"
    return str(Path(settings.output_dir) / "invariant-compare.csv")


def cmd_invariant(config: ExperimentConfig, pool: ReplicaPool) -> int:
    kind, ell = single_point(config)
    sigma = kind.validate_pair(VelocityPair(config.s1, config.s2))

    if config.lattice:
        L = single_size(config)
        params = LatticeParams(L=L, ell=ell, kind=kind)
        stationary = stationary_distribution(params)
        write_frame(stationary.to_frame(), config.output)
        if config.compare_horizon:
            init = LatticeState(initial_site(config.x0, L, ell), sigma)
            trajectory = simulate_discrete(params, init, config.compare_horizon, replica_rng(config.seed, 0))
            frame = stationary.to_frame()
            frame["empirical"] = lattice_occupation(trajectory, params).ravel()
            frame["tv"] = 0.5 * float(np.abs(frame["empirical"] - frame["prob"]).sum())
            logger.info("lattice occupation compared", L=L, tv=float(frame["tv"].iloc[0]))
            write_frame(frame, _compare_path(config))
        return 0

    measure = invariant_measure(kind, ell)
    write_json(measure.to_dict(), config.output)
    if config.compare_horizon:
        accumulator = OccupationAccumulator(kind, ell, config.bins)
        simulate_continuous(ContParams(ell, kind), ContState(config.x0, sigma), config.compare_horizon,
                            replica_rng(config.seed, 0), accumulator=accumulator, record=False)
        empirical = accumulator.to_measure()
        analytic = discretize(measure, config.bins)
        frame = analytic.to_frame().rename(columns={"mass": "analytic"})
        frame["empirical"] = empirical.to_frame()["mass"].to_numpy()
        frame["tv"] = tv_distance(empirical, analytic)
        logger.info("occupation compared", kind=kind.label, ell=ell, tv=float(frame["tv"].iloc[0]))
        write_frame(frame, _compare_path(config))
    return 0
