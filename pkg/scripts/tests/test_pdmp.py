"""
Tests for the continuous separation process: jam classes, the clamped flow,
exact simulation and occupation measures.
"""

import numpy as np
import pytest

from app.errors import DomainError
from app.models.pdmp import ContParams, ContState, StateClass
from app.models.velocity import TumbleKind, VelocityPair
from app.services.invariant_measures import discretize, invariant_measure
from app.services.distances import tv_distance
from app.services.pdmp_process import (
    OccupationAccumulator,
    classify,
    empirical_measure,
    flow_segment,
    jammed_fraction,
    naive_flow,
    occupation_measure,
    position_at,
    simulate_continuous,
    state_at,
)
from app.services.velocity_process import sample_velocity_path


def test_classify_boundary_states():
    ell = 1.0
    assert classify(ContState(0.0, VelocityPair(1, -1)), ell) == StateClass.JAMMED_AT_0
    assert classify(ContState(0.0, VelocityPair(1, 1)), ell) == StateClass.JAMMED_AT_0
    assert classify(ContState(0.0, VelocityPair(-1, 1)), ell) == StateClass.BULK
    assert classify(ContState(ell, VelocityPair(-1, 1)), ell) == StateClass.JAMMED_AT_L
    assert classify(ContState(ell, VelocityPair(1, -1)), ell) == StateClass.BULK
    assert classify(ContState(0.4, VelocityPair(0, 0)), ell) == StateClass.BULK
    with pytest.raises(DomainError):
        classify(ContState(1.5, VelocityPair(1, 1)), ell)


def test_classify_tolerates_rounding_at_the_boundary():
    ell = 0.1 + 0.2
    near_zero = ell - 0.3
    near_ell = 0.3
    assert near_zero != 0.0 and near_ell != ell
    assert classify(ContState(near_zero, VelocityPair(1, -1)), ell) == StateClass.JAMMED_AT_0
    assert classify(ContState(near_ell, VelocityPair(-1, 1)), ell) == StateClass.JAMMED_AT_L
    assert classify(ContState(1e-6, VelocityPair(1, -1)), ell) == StateClass.BULK


def test_flow_clamps_and_reports_the_hit():
    x, clamps = flow_segment(0.5, (1, -1), 1.0, 1.0)
    assert x == 0.0
    assert clamps[0].time == pytest.approx(0.25)
    assert clamps[0].boundary == 0.0

    x, clamps = flow_segment(0.5, (0, 1), 0.2, 1.0)
    assert x == pytest.approx(0.7)
    assert clamps == []

    x, clamps = flow_segment(1.0, (-1, 1), 3.0, 1.0)
    assert x == 1.0 and clamps == []

    with pytest.raises(DomainError):
        flow_segment(0.5, (1, 1), -1.0, 1.0)


def test_path_stays_in_the_interval(itp, rng):
    params = ContParams(1.0, itp)
    run = simulate_continuous(params, ContState(0.3, VelocityPair(1, -1)), 200.0, rng)
    path = run.path
    assert path.times[0] == 0.0 and path.x[0] == pytest.approx(0.3)
    assert np.all((path.x >= 0.0) & (path.x <= 1.0))
    assert np.all(np.diff(path.times) >= 0)
    assert run.final_state.x == pytest.approx(position_at(path, 200.0))
    for event in path.clamp_events:
        assert event.boundary in (0.0, 1.0)


def test_exact_path_matches_fine_euler_scheme(ftp, rng):
    params = ContParams(1.0, ftp)
    run = simulate_continuous(params, ContState(0.5, VelocityPair(0, 1)), 10.0, rng)
    grid, x_naive = naive_flow(params, run.velocity, 0.5, 1e-4)
    x_exact = position_at(run.path, grid)
    assert np.max(np.abs(x_exact - x_naive)) < 1e-2


def test_chunked_simulation_uses_the_particle_clocks():
    kind = TumbleKind.instantaneous(50.0)
    params = ContParams(2.0, kind)
    run = simulate_continuous(params, ContState(1.0, VelocityPair(1, 1)), 100.0, np.random.default_rng(4))
    direct = sample_velocity_path(kind, (1, 1), 100.0, np.random.default_rng(4))
    np.testing.assert_array_equal(run.velocity.times, direct.times)
    np.testing.assert_array_equal(run.velocity.states, direct.states)


def test_record_false_keeps_final_state(itp):
    params = ContParams(1.0, itp)
    init = ContState(0.0, VelocityPair(-1, 1))
    full = simulate_continuous(params, init, 30.0, np.random.default_rng(8))
    bare = simulate_continuous(params, init, 30.0, np.random.default_rng(8), record=False)
    assert bare.path is None
    assert bare.final_state == full.final_state


def test_state_at_reads_velocity(itp, rng):
    params = ContParams(1.0, itp)
    run = simulate_continuous(params, ContState(0.5, VelocityPair(1, -1)), 5.0, rng)
    assert state_at(run.path, 0.0).sigma == VelocityPair(1, -1)
    with pytest.raises(DomainError):
        position_at(run.path, 6.0)


def test_occupation_is_a_probability(ftp, rng):
    params = ContParams(1.5, ftp)
    run = simulate_continuous(params, ContState(0.2, VelocityPair(1, 0)), 500.0, rng)
    occupation = occupation_measure(run, 20)
    assert occupation.total_mass() == pytest.approx(1.0)
    frac0, fracL = jammed_fraction(run.path)
    assert occupation.jammed_fraction() == pytest.approx((frac0, fracL))


def test_accumulators_merge_over_split_rows(itp, rng):
    params = ContParams(1.0, itp)
    path = simulate_continuous(params, ContState(0.5, VelocityPair(1, 1)), 50.0, rng).path
    n = len(path.times) // 2
    whole = OccupationAccumulator(itp, 1.0, 10)
    whole.add_rows(path.times, path.x, path.s1, path.s2, path.horizon)
    first, second = OccupationAccumulator(itp, 1.0, 10), OccupationAccumulator(itp, 1.0, 10)
    first.add_rows(path.times[:n], path.x[:n], path.s1[:n], path.s2[:n], path.times[n])
    second.add_rows(path.times[n:], path.x[n:], path.s1[n:], path.s2[n:], path.horizon)
    merged = first.merge(second)
    np.testing.assert_allclose(merged.bulk, whole.bulk, atol=1e-12)
    np.testing.assert_allclose(merged.atoms0, whole.atoms0, atol=1e-12)
    with pytest.raises(DomainError):
        whole.merge(OccupationAccumulator(itp, 1.0, 11))


def test_long_run_occupation_approaches_invariant_law(itp, rng):
    params = ContParams(1.0, itp)
    run = simulate_continuous(params, ContState(0.0, VelocityPair(1, 1)), 20000.0, rng, record=False,
                              accumulator=OccupationAccumulator(itp, 1.0, 10))
    occupation = occupation_measure(run, 10)
    target = discretize(invariant_measure(itp, 1.0), 10)
    assert tv_distance(occupation, target) < 0.05
    # atoms of the instantaneous law carry 8c = 2/3 of the mass at omega = ell = 1
    assert sum(occupation.jammed_fraction()) == pytest.approx(2.0 / 3.0, abs=0.03)


def test_empirical_measure_counts_atoms(itp):
    x = np.array([0.0, 0.0, 1.0, 0.5])
    s1 = np.array([1, -1, -1, 1])
    s2 = np.array([-1, 1, 1, 1])
    measure = empirical_measure(x, s1, s2, itp, 1.0, 4)
    # (0, (-1, 1)) flows into the bulk
    assert measure.atoms0.sum() == pytest.approx(0.25)
    assert measure.atomsL.sum() == pytest.approx(0.25)
    assert measure.bulk.sum() == pytest.approx(0.5)
    with pytest.raises(DomainError):
        empirical_measure(np.empty(0), [], [], itp, 1.0, 4)


@pytest.mark.parametrize("name, sigma", [("itp", (1, -1)), ("itp", (1, 1)), ("ftp", (0, 1)), ("ftp", (-1, 0))])
def test_swapped_particles_mirror_the_path(request, name, sigma):
    kind = request.getfixturevalue(name)
    ell, x0, horizon = 1.0, 0.3, 50.0
    params = ContParams(ell, kind)
    run = simulate_continuous(params, ContState(x0, VelocityPair(*sigma)), horizon, np.random.default_rng(17))
    mirrored = simulate_continuous(params, ContState(ell - x0, VelocityPair(sigma[1], sigma[0])), horizon,
                                   np.random.default_rng(17), swap_particles=True)

    np.testing.assert_array_equal(run.velocity.times, mirrored.velocity.times)
    np.testing.assert_array_equal(run.velocity.states, mirrored.velocity.states[:, ::-1])
    grid = np.union1d(np.union1d(run.path.times, mirrored.path.times), np.linspace(0.0, horizon, 2001))
    np.testing.assert_allclose(ell - position_at(run.path, grid), position_at(mirrored.path, grid), atol=1e-9)
    assert jammed_fraction(run.path) == pytest.approx(jammed_fraction(mirrored.path)[::-1], abs=1e-9)
