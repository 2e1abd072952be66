"""
Tests for the replica pool, coupling-time quantiles, tail fits and the
mixing-time estimator.
"""

import numpy as np
import pytest

from app.config import settings
from app.errors import ConfigurationError
from app.models.pdmp import ContParams, ContState
from app.models.velocity import TumbleKind, VelocityPair
from app.services.mixing import (
    REPLICA_COLUMNS,
    MixingEstimator,
    _coupling_replica,
    coupling_horizon,
    coupling_quantile,
    estimate_mixing_time,
    init_grid,
    mixing_time_scale,
    replica_frame,
    tail_decay_fit,
    velocity_lower_bound,
)
from app.services.replica_pool import ReplicaPool, replica_rng


def test_replica_streams_depend_on_seed_key_and_index():
    first = replica_rng(1, 0).random()
    assert replica_rng(1, 0).random() == first
    assert replica_rng(1, 1).random() != first
    assert replica_rng(1, 0, key=(2,)).random() != first
    assert replica_rng(2, 0).random() != first


def test_pool_results_do_not_depend_on_workers(itp):
    params = ContParams(1.0, itp)
    a, b = ContState(0.0, VelocityPair(1, -1)), ContState(1.0, VelocityPair(-1, 1))
    serial = ReplicaPool(workers=1, chunk_size=3).map_array(_coupling_replica, 10, 7, params, a, b, 1000.0)
    parallel = ReplicaPool(workers=2, chunk_size=3).map_array(_coupling_replica, 10, 7, params, a, b, 1000.0)
    assert serial.shape == (10, 3)
    np.testing.assert_array_equal(serial, parallel)


def test_pool_rejects_bad_sizes():
    with pytest.raises(ConfigurationError):
        ReplicaPool(workers=1).map(_coupling_replica, -1, 0)


def test_time_scale_and_lower_bound():
    assert mixing_time_scale(TumbleKind.instantaneous(2.0), 1.0) == pytest.approx(2.5)
    assert mixing_time_scale(TumbleKind.finite(1.0, 1.0), 2.0) == pytest.approx(10.0)
    assert velocity_lower_bound(TumbleKind.instantaneous(1.0), 0.25) == pytest.approx(np.log(4.0) / 2.0)
    with pytest.raises(ConfigurationError):
        velocity_lower_bound(TumbleKind.instantaneous(1.0), 1.5)


def test_coupling_horizon_follows_settings(monkeypatch):
    assert coupling_horizon(2.0) == pytest.approx(settings.coupling_horizon_scales * 2.0)
    monkeypatch.setattr(settings, "coupling_horizon_scales", 10.0)
    assert coupling_horizon(2.0) == 20.0
    monkeypatch.setattr(settings, "max_event_time", 5.0)
    assert coupling_horizon(2.0) == 5.0


def test_init_grid_covers_all_velocity_pairs(ftp):
    grid = init_grid(ftp, 2.0)
    assert len(grid) == 5 * 9
    assert {s.x for s in grid} == {0.0, 0.5, 1.0, 1.5, 2.0}


def test_coupling_quantile_order_statistic():
    taus = np.arange(1.0, 101.0)
    estimate = coupling_quantile(taus, 0.1)
    assert estimate.time == 90.0
    assert estimate.exceed_fraction == pytest.approx(0.1)
    assert estimate.time_low <= estimate.time <= estimate.time_high
    assert estimate.exceed_low <= 0.1 <= estimate.exceed_high
    with pytest.raises(ConfigurationError):
        coupling_quantile([], 0.1)


def test_tail_fit_recovers_exponential_rate(rng):
    taus = rng.exponential(1.0, 50000)
    fit = tail_decay_fit(taus, 0.5)
    assert fit.slope == pytest.approx(-0.5, abs=0.05)
    assert fit.slope_low <= fit.slope <= fit.slope_high
    with pytest.raises(ConfigurationError):
        tail_decay_fit(np.full(10, 0.1), 1.0)


def test_estimator_on_a_small_grid():
    kind = TumbleKind.instantaneous(1.0)
    grid = [ContState(0.0, VelocityPair(1, -1)), ContState(0.5, VelocityPair(1, 1)),
            ContState(0.5, VelocityPair(-1, 1))]
    estimator = MixingEstimator(ReplicaPool(workers=1), worst_pairs=2, keep_replicas=True)
    estimate = estimator.estimate(kind, 0.5, 0.25, replicas=200, seed=3, grid=grid,
                                  pilot_replicas=16, tv_replicas=100, bins=5)
    assert len(estimate.worst_pairs) == 2
    assert estimate.t_mix_coupling_low <= estimate.t_mix_coupling <= estimate.t_mix_coupling_high
    assert estimate.t_mix_coupling > 0
    assert estimate.time_grid and set(estimate.tv_by_bins) == {"5", "10"}
    assert all(0.0 <= v <= 1.0 for v in estimate.tv_by_bins["5"])

    frame = replica_frame(estimator.replica_rows)
    assert len(frame) == 2 * 200
    assert list(frame.columns[-len(REPLICA_COLUMNS):]) == list(REPLICA_COLUMNS)
    assert frame["sup_deviation"].isna().all()


def test_estimator_is_reproducible():
    kind = TumbleKind.finite(1.0, 1.0)
    grid = [ContState(0.0, VelocityPair(1, 0)), ContState(1.0, VelocityPair(0, -1))]
    runs = [MixingEstimator(ReplicaPool(workers=1)).estimate(kind, 1.0, 0.25, replicas=50, seed=9, grid=grid,
                                                             pilot_replicas=8, tv_replicas=0)
            for _ in range(2)]
    assert runs[0].model_dump_json() == runs[1].model_dump_json()
    assert runs[0].t_mix_tv is None

    direct = estimate_mixing_time(kind, 1.0, 0.25, 50, 9, grid=grid, pool=ReplicaPool(workers=1),
                                  pilot_replicas=8, tv_replicas=0)
    assert direct.model_dump_json() == runs[0].model_dump_json()


def test_empty_replica_frame_has_columns():
    assert list(replica_frame([]).columns) == list(REPLICA_COLUMNS)
