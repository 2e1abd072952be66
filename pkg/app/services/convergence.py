"""
Convergence Service

Lattice-to-continuum convergence at a list of lattice sizes: quantiles of the
coupled sup-deviation, the exceedance probability against its bound, and the
Wasserstein-1 distance between the embedded lattice stationary law and the
continuum invariant measure.
"""

from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
import structlog

from app.config import settings
from app.errors import ConfigurationError
from app.models.lattice import LatticeParams
from app.models.pdmp import ContParams
from app.models.velocity import TumbleKind, VelocityPair
from app.services.couplings import couple_discrete_continuous, scaling_limit_bound, sup_deviation
from app.services.distances import w1_distance
from app.services.invariant_measures import invariant_measure
from app.services.lattice_process import stationary_distribution
from app.services.replica_pool import ReplicaPool

CONVERGENCE_COLUMNS = [
    "L", "replicas", "sup_dev_q10", "sup_dev_q50", "sup_dev_q90", "p_exceed", "bound", "eta", "w1",
]


def deviation_replica(rng: np.random.Generator, L: int, params: ContParams, x0: float, sigma0, T: float) -> float:
    pair = couple_discrete_continuous(L, params, x0, sigma0, T, rng)
    return sup_deviation(pair, T)


class ConvergenceStudy:
    """Runs the per-L convergence rows for one velocity kind and torus length."""

    def __init__(self, kind: TumbleKind, ell: float, pool: Optional[ReplicaPool] = None):
        self.params = ContParams(ell, kind)
        self.pool = pool or ReplicaPool()
        self.logger = structlog.get_logger(__name__)
        self._target = None

    @property
    def target(self):
        if self._target is None:
            self._target = invariant_measure(self.params.kind, self.params.ell)
        return self._target

    def deviations(self, L: int, T: float, replicas: int, seed: int, x0: float = 0.0,
                   sigma0=None) -> np.ndarray:
        sigma0 = VelocityPair(*(sigma0 or self.params.kind.sigmas[0]))
        return self.pool.map_array(deviation_replica, replicas, seed, L, self.params, x0, sigma0, T, key=(20, L))

    def lattice_w1(self, L: int) -> float:
        """W1 between the embedded lattice stationary law and the invariant measure; NaN above the solve limit."""
        lattice = LatticeParams(L=L, ell=self.params.ell, kind=self.params.kind)
        if lattice.n_states > settings.direct_solve_limit:
            self.logger.info("w1 skipped", L=L, states=lattice.n_states, limit=settings.direct_solve_limit)
            return float("nan")
        return w1_distance(stationary_distribution(lattice), self.target)

    def row(self, L: int, T: float, epsilon: float, replicas: int, seed: int, x0: float = 0.0,
            sigma0=None, with_w1: bool = True) -> dict:
        if L < 2:
            raise ConfigurationError(f"L must be at least 2, got {L}")
        devs = self.deviations(L, T, replicas, seed, x0, sigma0) if replicas else np.array([np.nan])
        bound, eta = scaling_limit_bound(epsilon, T, L, self.params.ell, self.params.kind)
        q10, q50, q90 = np.quantile(devs, [0.1, 0.5, 0.9])
        row = {
            "L": L,
            "replicas": replicas,
            "sup_dev_q10": float(q10),
            "sup_dev_q50": float(q50),
            "sup_dev_q90": float(q90),
            "p_exceed": float(np.mean(devs >= epsilon)) if replicas else float("nan"),
            "bound": bound,
            "eta": eta,
            "w1": self.lattice_w1(L) if with_w1 else float("nan"),
        }
        self.logger.info("convergence row", **row)
        return row

    def table(self, L_list: Iterable[int], T: float, epsilon: float, replicas: int, seed: int,
              x0: float = 0.0, sigma0=None, with_w1: bool = True) -> pd.DataFrame:
        rows: List[dict] = [self.row(int(L), T, epsilon, replicas, seed, x0, sigma0, with_w1) for L in L_list]
        return pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)
