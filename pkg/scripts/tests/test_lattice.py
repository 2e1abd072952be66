"""
Tests for the discrete separation chain: site maps, clamp moves, the sparse
generator, its stationary law and exact trajectories.
"""

import numpy as np
import pytest

from app.config import settings
from app.errors import ConvergenceBudgetError, DomainError
from app.models.lattice import LatticeParams, LatticeState
from app.models.velocity import TumbleKind, VelocityPair
from app.services.lattice_process import (
    changes_only,
    discrete_generator,
    embed_position,
    fold_p_L,
    folded_walk_rate,
    initial_site,
    is_irreducible,
    jammed_pair_rate,
    lattice_occupation,
    poisson_rings,
    ring_walk_bound,
    simulate_discrete,
    state_sequence,
    stationary_distribution,
    step_discrete,
    transient_distribution,
)
from app.services.velocity_process import stationary_velocity_law


@pytest.fixture(params=["itp", "ftp"])
def params(request):
    kind = TumbleKind.instantaneous(1.0) if request.param == "itp" else TumbleKind.finite(1.0, 2.0)
    return LatticeParams(L=6, ell=1.0, kind=kind)


def test_scaled_clock_rate(params):
    assert params.gamma == pytest.approx(5.0)
    assert params.n_states == 6 * len(params.kind.sigmas)


def test_lattice_needs_two_sites(itp):
    with pytest.raises(ValueError):
        LatticeParams(L=1, kind=itp)


def test_embedding_endpoints():
    assert embed_position(1, 11, 2.0) == 0.0
    assert embed_position(11, 11, 2.0) == 2.0
    assert embed_position(6, 11, 2.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        embed_position(0, 11, 2.0)


def test_initial_site_stays_on_lattice():
    assert initial_site(0.0, 10, 1.0) == 1
    assert initial_site(1.0, 10, 1.0) == 10
    assert 1 <= initial_site(0.37, 10, 1.0) <= 10


def test_fold_reflects_with_period_2L():
    L = 5
    assert fold_p_L(1, L) == 1
    assert fold_p_L(0, L) == 1
    assert fold_p_L(L + 1, L) == L
    assert fold_p_L(2 * L + 1, L) == 1
    folded = fold_p_L(np.arange(-30, 30), L)
    assert folded.min() == 1 and folded.max() == L


def test_step_clamps_at_both_ends():
    state = LatticeState(1, VelocityPair(1, -1))
    assert step_discrete(state, 1, 4).y == 1
    assert step_discrete(state, 2, 4).y == 1
    top = LatticeState(4, VelocityPair(-1, 1))
    assert step_discrete(top, 1, 4).y == 4
    assert step_discrete(LatticeState(2, VelocityPair(-1, 1)), 2, 4).y == 3
    with pytest.raises(DomainError):
        step_discrete(state, 3, 4)


def test_jammed_rate_respects_clamp():
    assert jammed_pair_rate(3, 4, 5, 2.0) == 2.0
    assert jammed_pair_rate(1, 2, 5, 2.0) == 2.0
    assert jammed_pair_rate(3, 3, 5, 2.0) == 0.0
    assert jammed_pair_rate(3, 5, 5, 2.0) == 0.0


def test_generator_rows_and_irreducibility(params):
    generator = discrete_generator(params)
    assert generator.shape == (params.n_states, params.n_states)
    np.testing.assert_allclose(np.asarray(generator.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    assert is_irreducible(generator)


def test_generator_drops_null_moves(itp):
    params = LatticeParams(L=3, kind=itp)
    generator = discrete_generator(params).toarray()
    # sigma (1,-1) at site 1 is jammed: both rings are clamped away
    i = params.state_index(1, (1, -1))
    positional = [params.state_index(y, (1, -1)) for y in (2, 3)]
    assert np.all(generator[i, positional] == 0.0)


def test_stationary_law(params):
    stationary = stationary_distribution(params)
    assert stationary.flat.sum() == pytest.approx(1.0)
    assert np.all(stationary.flat >= 0)
    assert stationary.residual < 1e-10
    _, pair = stationary_velocity_law(params.kind)
    np.testing.assert_allclose(stationary.velocity_marginal(), pair, atol=1e-10)


def test_power_iteration_agrees_with_direct_solve(params, monkeypatch):
    direct = stationary_distribution(params)
    monkeypatch.setattr(settings, "direct_solve_limit", 1)
    power = stationary_distribution(params)
    assert (direct.method, power.method) == ("direct", "power")
    assert power.residual < 1e-10
    np.testing.assert_allclose(power.probs, direct.probs, atol=1e-9)


def test_power_iteration_reports_an_exhausted_sweep_budget(params, monkeypatch):
    monkeypatch.setattr(settings, "direct_solve_limit", 1)
    monkeypatch.setattr(settings, "power_iteration_max_sweeps", 3)
    with pytest.raises(ConvergenceBudgetError, match="3 sweeps"):
        stationary_distribution(params)


def test_transient_law_relaxes(params):
    init = LatticeState(2, params.kind.sigmas[0])
    early = transient_distribution(params, init, 0.0)
    assert early[1, 0] == pytest.approx(1.0)
    late = transient_distribution(params, init, 80.0)
    assert late.sum() == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(late, stationary_distribution(params).probs, atol=1e-4)


def test_changes_only_drops_repeats():
    traj = changes_only([0.0, 1.0, 2.0, 3.0], [1, 1, 2, 2], [1, 1, 1, -1], [1, 1, 1, 1], 4.0)
    np.testing.assert_array_equal(traj.times, [0.0, 2.0, 3.0])


def test_trajectory_stays_on_lattice(params, rng):
    init = LatticeState(3, params.kind.sigmas[0])
    traj = simulate_discrete(params, init, 50.0, rng)
    assert traj.times[0] == 0.0
    assert traj.y[0] == 3
    assert traj.y.min() >= 1 and traj.y.max() <= params.L
    assert np.all(np.abs(np.diff(traj.y)) <= 1)


def test_simulation_is_reproducible(params):
    init = LatticeState(1, params.kind.sigmas[-1])
    a = simulate_discrete(params, init, 20.0, np.random.default_rng(5))
    b = simulate_discrete(params, init, 20.0, np.random.default_rng(5))
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.y, b.y)


def test_long_run_occupation_matches_stationary_law(rng):
    params = LatticeParams(L=5, kind=TumbleKind.instantaneous(1.0))
    traj = simulate_discrete(params, LatticeState(1, VelocityPair(1, 1)), 20000.0, rng)
    occupation = lattice_occupation(traj, params)
    assert occupation.sum() == pytest.approx(1.0)
    tv = 0.5 * np.abs(occupation - stationary_distribution(params).probs).sum()
    assert tv < 0.05


def test_state_sequence_order(params):
    states = state_sequence(params)
    assert len(states) == params.n_states
    for idx in (0, 7, params.n_states - 1):
        s = states[idx]
        assert params.state_index(s.y, s.sigma) == idx


@pytest.mark.parametrize("L", [2, 5])
def test_fold_lumps_the_free_walk_onto_the_clamped_walk(L):
    gamma = 3.0
    for z in range(-2 * L, 3 * L):
        y = fold_p_L(z, L)
        for target in range(1, L + 1):
            if target != y:
                assert folded_walk_rate(z, target, L, gamma) == jammed_pair_rate(y, target, L, gamma)


def test_poisson_rings_count_and_order(rng):
    rings = poisson_rings(50.0, 200.0, rng)
    assert np.all(np.diff(rings) >= 0)
    assert np.all((rings >= 0) & (rings <= 200.0))
    # mean 10000, sd 100
    assert abs(len(rings) - 10_000) < 500
    assert len(poisson_rings(0.0, 10.0, rng)) == 0


def test_ring_walk_bound():
    assert ring_walk_bound(0.5, 1.0, 100.0) == pytest.approx(0.4)
    assert ring_walk_bound(0.5, 0.0, 100.0) == 0.0
    with pytest.raises(DomainError):
        ring_walk_bound(0.0, 1.0, 100.0)
