"""
Mixing Service

Mixing-time estimation for the continuous separation process from coupling
times over a grid of initial pairs, plus a direct estimate from binned
empirical laws against the invariant measure.
"""

import itertools
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from scipy import stats

from app.config import settings
from app.errors import ConfigurationError
from app.models.coupling import MixingEstimate, PairEstimate, QuantileEstimate, TailFit
from app.models.pdmp import ContParams, ContState
from app.models.velocity import TumbleKind
from app.services.couplings import continuous_coupling_time
from app.services.distances import tv_distance
from app.services.invariant_measures import discretize, invariant_measure
from app.services.pdmp_process import empirical_measure, position_at, simulate_continuous
from app.services.replica_pool import ReplicaPool

GRID_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
TIME_GRID_MULTIPLES = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0)
REPLICA_COLUMNS = ("replica", "tau1", "tau2", "tau_coupling", "sup_deviation")


def mixing_time_scale(kind: TumbleKind, ell: float) -> float:
    if kind.is_instantaneous:
        w = kind.omega
        return (1.0 + w * w * ell * ell) / w
    a, b = kind.alpha, kind.beta
    return (1.0 / a + 1.0 / b) * (1.0 + a * a * ell * ell)


def velocity_lower_bound(kind: TumbleKind, epsilon: float) -> float:
    """Time before which a diagonal velocity pair has likely not changed."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    rate = kind.omega if kind.is_instantaneous else min(kind.alpha, kind.beta)
    return abs(math.log(epsilon)) / (2.0 * rate)


def coupling_horizon(scale: float) -> float:
    """Time after which an unmet coupling run is reported as inf."""
    return min(settings.max_event_time, settings.coupling_horizon_scales * scale)


def init_grid(kind: TumbleKind, ell: float) -> List[ContState]:
    return [ContState(f * ell, sigma) for f in GRID_FRACTIONS for sigma in kind.sigmas]


def coupling_quantile(taus: Sequence[float], epsilon: float, confidence: float = 0.95) -> QuantileEstimate:
    """
    Smallest sample time t with empirical P(tau > t) <= epsilon, with
    order-statistic bounds on t and Clopper-Pearson bounds on P(tau > t).
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    taus = np.sort(np.asarray(taus, dtype=float))
    n = len(taus)
    if n == 0:
        raise ConfigurationError("no coupling times")
    level = 1.0 - epsilon
    index = min(n, max(1, math.ceil(n * level))) - 1
    time = float(taus[index])

    tail = 0.5 * (1.0 - confidence)
    lo_index = int(stats.binom.ppf(tail, n, level))
    hi_index = int(stats.binom.ppf(1.0 - tail, n, level))
    time_low = float(taus[max(0, min(n - 1, lo_index - 1))])
    time_high = float(taus[min(n - 1, hi_index)])

    exceed = int(np.sum(taus > time))
    exceed_low = 0.0 if exceed == 0 else float(stats.beta.ppf(tail, exceed, n - exceed + 1))
    exceed_high = 1.0 if exceed == n else float(stats.beta.ppf(1.0 - tail, exceed + 1, n - exceed))
    return QuantileEstimate(
        level=level,
        time=time,
        time_low=time_low,
        time_high=time_high,
        exceed_fraction=exceed / n,
        exceed_low=exceed_low,
        exceed_high=exceed_high,
        replicas=n,
    )


def tail_decay_fit(taus: Sequence[float], t_star: float, k_max: int = 6) -> TailFit:
    """Linear fit of log P(tau > k t*) against k = 1..k_max with a 95% slope interval."""
    taus = np.asarray(taus, dtype=float)
    ks = np.arange(1, k_max + 1)
    tails = np.array([np.mean(taus > k * t_star) for k in ks])
    usable = tails > 0
    if usable.sum() < 3:
        raise ConfigurationError("fewer than three nonzero tail probabilities; lower t_star")
    fit = stats.linregress(ks[usable], np.log(tails[usable]))
    half = stats.t.ppf(0.975, usable.sum() - 2) * fit.stderr
    return TailFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_low=float(fit.slope - half),
        slope_high=float(fit.slope + half),
        points=int(usable.sum()),
    )


def _coupling_replica(rng: np.random.Generator, params: ContParams, init_a: ContState,
                      init_b: ContState, max_time: float) -> Tuple[float, float, float]:
    times = continuous_coupling_time(params, init_a, init_b, rng, max_time=max_time)
    return times.tau1, times.tau2, times.tau_coupling


def _state_dict(state: ContState) -> dict:
    return {"x": state.x, "s1": int(state.sigma[0]), "s2": int(state.sigma[1])}


def _final_states_replica(rng: np.random.Generator, params: ContParams, init: ContState,
                          times: Tuple[float, ...]):
    run = simulate_continuous(params, init, times[-1], rng)
    k = np.searchsorted(run.path.times, times, side="right") - 1
    return position_at(run.path, np.asarray(times)), run.path.s1[k], run.path.s2[k]


class MixingEstimator:
    """
    Two estimators of t_mix(epsilon):

    (a) coupling based: pilot runs on every unordered pair of the init grid pick
        the pairs with the largest coupling-time quantile; full runs on those
        give the worst-case quantile of tau_coupling;
    (b) TV based: empirical law of many runs from the worst pair's members,
        binned and compared with the invariant law at a time grid.
    """

    def __init__(self, pool: Optional[ReplicaPool] = None, worst_pairs: int = 3, keep_replicas: bool = False):
        self.pool = pool or ReplicaPool()
        self.worst_pairs = worst_pairs
        self.keep_replicas = keep_replicas
        self.replica_rows: List[dict] = []
        self.logger = structlog.get_logger(__name__)

    def estimate(
        self,
        kind: TumbleKind,
        ell: float,
        epsilon: float,
        replicas: int,
        seed: int,
        grid: Optional[List[ContState]] = None,
        pilot_replicas: Optional[int] = None,
        tv_replicas: Optional[int] = None,
        bins: Optional[int] = None,
    ) -> MixingEstimate:
        if not 0.0 < epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
        params = ContParams(ell, kind)
        grid = grid or init_grid(kind, ell)
        pilot_replicas = pilot_replicas or settings.pilot_replicas
        scale = mixing_time_scale(kind, ell)
        max_time = coupling_horizon(scale)

        pairs = [(a, b) for a, b in itertools.combinations(grid, 2)]
        pilot = []
        for index, (a, b) in enumerate(pairs):
            results = self.pool.map_array(_coupling_replica, pilot_replicas, seed, params, a, b, max_time,
                                          key=(1, index))
            taus = results[:, 2]
            pilot.append(float(np.quantile(taus, 1.0 - epsilon)))
        order = np.argsort(pilot)[::-1][: self.worst_pairs]
        self.logger.info("pilot selection", pairs=len(pairs), pilot_replicas=pilot_replicas,
                         worst=[float(pilot[i]) for i in order])

        estimates = []
        all_taus = {}
        for index in order:
            a, b = pairs[index]
            results = self.pool.map_array(_coupling_replica, replicas, seed, params, a, b, max_time,
                                          key=(2, int(index)))
            taus = results[:, 2]
            if self.keep_replicas:
                self._record(kind, ell, int(index), a, b, results)
            all_taus[int(index)] = taus
            estimates.append(
                PairEstimate(init_a=_state_dict(a), init_b=_state_dict(b), pilot_quantile=pilot[index],
                             quantile=coupling_quantile(taus, epsilon))
            )
        worst = max(estimates, key=lambda e: e.quantile.time)
        worst_index = int(order[estimates.index(worst)])

        estimate = MixingEstimate(
            kind=kind.to_dict(),
            ell=ell,
            epsilon=epsilon,
            seed=seed,
            replicas=replicas,
            scale=scale,
            lower_bound=velocity_lower_bound(kind, epsilon),
            t_mix_coupling=worst.quantile.time,
            t_mix_coupling_low=worst.quantile.time_low,
            t_mix_coupling_high=worst.quantile.time_high,
            worst_pairs=estimates,
        )
        try:
            estimate.tail = tail_decay_fit(all_taus[worst_index], 0.5 * scale)
        except ConfigurationError as e:
            self.logger.warning("tail fit skipped", reason=str(e))

        if tv_replicas != 0:
            self._tv_estimate(estimate, params, pairs[worst_index], seed, tv_replicas or settings.tv_replicas,
                              bins or settings.occupation_bins)
        self.logger.info("mixing estimate", kind=kind.label, ell=ell, t_mix=estimate.t_mix_coupling,
                         t_mix_tv=estimate.t_mix_tv, scale=scale)
        return estimate

    def _record(self, kind: TumbleKind, ell: float, pair_index: int, a: ContState, b: ContState,
                results: np.ndarray) -> None:
        params = {**kind.params(), "ell": ell, "pair": pair_index,
                  "x_a": a.x, "s1_a": a.sigma[0], "s2_a": a.sigma[1],
                  "x_b": b.x, "s1_b": b.sigma[0], "s2_b": b.sigma[1]}
        for replica, (tau1, tau2, tau_coupling) in enumerate(results):
            self.replica_rows.append({**params, "replica": replica, "tau1": tau1, "tau2": tau2,
                                      "tau_coupling": tau_coupling, "sup_deviation": np.nan})

    def _tv_estimate(self, estimate: MixingEstimate, params: ContParams, pair, seed: int,
                     replicas: int, bins: int) -> None:
        times = tuple(float(m * estimate.scale) for m in TIME_GRID_MULTIPLES)
        target = invariant_measure(params.kind, params.ell)
        bin_counts = (bins, 2 * bins)
        curves = {str(b): np.zeros(len(times)) for b in bin_counts}
        for member, init in enumerate(pair):
            results = self.pool.map(_final_states_replica, replicas, seed, params, init, times, key=(3, member))
            x = np.array([r[0] for r in results])
            s1 = np.array([r[1] for r in results])
            s2 = np.array([r[2] for r in results])
            for b in bin_counts:
                reference = discretize(target, b)
                for j in range(len(times)):
                    law = empirical_measure(x[:, j], s1[:, j], s2[:, j], params.kind, params.ell, b)
                    curves[str(b)][j] = max(curves[str(b)][j], tv_distance(law, reference))
        estimate.time_grid = list(times)
        estimate.tv_by_bins = {b: curve.tolist() for b, curve in curves.items()}
        below = np.flatnonzero(curves[str(bins)] <= estimate.epsilon)
        estimate.t_mix_tv = float(times[below[0]]) if len(below) else None


def estimate_mixing_time(
    kind: TumbleKind,
    ell: float,
    epsilon: float,
    replicas: int,
    seed: int,
    grid: Optional[List[ContState]] = None,
    pool: Optional[ReplicaPool] = None,
    **options,
) -> MixingEstimate:
    return MixingEstimator(pool).estimate(kind, ell, epsilon, replicas, seed, grid=grid, **options)


def replica_frame(rows: List[dict]) -> pd.DataFrame:
    """Per-replica coupling table: parameter columns, then replica, tau1, tau2, tau_coupling, sup_deviation."""
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=list(REPLICA_COLUMNS))
    params = [c for c in frame.columns if c not in REPLICA_COLUMNS]
    return frame[params + list(REPLICA_COLUMNS)]
