"""
Tests for hitting and return times: closed forms against first-step solves,
the excursion generating function and Monte Carlo oracles.
"""

import numpy as np
import pytest

from app.errors import DomainError, EventBudgetError, PoleError
from app.models.hitting import (
    DIAGONAL_RETURN,
    JAM_AT_ZERO,
    VELOCITY_AGREEMENT,
    HittingQuery,
    oracle_frame,
)
from app.models.velocity import TumbleKind, VelocityPair
from app.services.hitting_times import (
    diagonal_return_solve,
    diagonal_return_statistics,
    excursion_autocorrelation,
    excursion_mgf,
    excursion_moments,
    excursion_pole,
    hit_frequencies,
    hitting_bound_citp,
    hitting_oracle_table,
    hitting_time_replica,
    hitting_time_residual,
    mean_hitting_time_citp,
    mean_velocity_coupling_time_cftp,
    monte_carlo_hitting,
    sample_diagonal_excursions,
    start_class,
    velocity_coupling_time_solve,
    zero_excursion_law_check,
)
from app.services.replica_pool import ReplicaPool

RATES = [(1.0, 1.0), (0.3, 2.0), (4.0, 0.5)]


@pytest.fixture
def pool():
    return ReplicaPool(workers=1)


@pytest.mark.parametrize("omega,ell", [(1.0, 1.0), (0.2, 3.0), (5.0, 0.4)])
def test_citp_closed_form_solves_the_system(omega, ell):
    bulk, boundary = hitting_time_residual(omega, ell)
    assert bulk < 1e-9
    assert boundary < 1e-12
    assert mean_hitting_time_citp(0.0, (1, -1), omega, ell) == 0.0


def test_citp_values_by_hand():
    # omega = ell = 1: f(x, (1,1)) = 2.5 + x + (2x - x^2)/2
    assert mean_hitting_time_citp(0.5, (1, 1), 1.0, 1.0) == pytest.approx(2.5 + 0.5 + 0.375)
    values = mean_hitting_time_citp(np.array([0.0, 1.0]), (-1, 1), 1.0, 1.0)
    np.testing.assert_allclose(values, [4.0, 4.5])
    with pytest.raises(DomainError):
        mean_hitting_time_citp(1.5, (1, 1), 1.0, 1.0)


def test_hitting_bound_is_the_maximum():
    value, x, sigma = hitting_bound_citp(0.7, 2.0)
    grid = np.linspace(0.0, 2.0, 401)
    for s in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
        assert np.all(mean_hitting_time_citp(grid, s, 0.7, 2.0) <= value + 1e-12)
    assert mean_hitting_time_citp(x, sigma, 0.7, 2.0) == pytest.approx(value)


@pytest.mark.parametrize("alpha,beta", RATES)
def test_agreement_times_match_first_step_solve(alpha, beta):
    kind = TumbleKind.finite(alpha, beta)
    table = velocity_coupling_time_solve(kind)
    for i, s in enumerate(kind.alphabet):
        for j, t in enumerate(kind.alphabet):
            assert mean_velocity_coupling_time_cftp(s, t, alpha, beta) == pytest.approx(table[i, j], rel=1e-10)


def test_agreement_time_of_neighbours():
    alpha, beta = 0.6, 1.7
    expected = (4 * alpha + beta) / (2 * alpha * (2 * alpha + beta))
    assert mean_velocity_coupling_time_cftp(1, 0, alpha, beta) == pytest.approx(expected)
    with pytest.raises(DomainError):
        mean_velocity_coupling_time_cftp(2, 0, alpha, beta)


@pytest.mark.parametrize("alpha,beta", RATES)
def test_return_times_by_start_class(alpha, beta):
    kind = TumbleKind.finite(alpha, beta)
    solved = diagonal_return_solve(kind)
    closed = diagonal_return_statistics(alpha, beta)
    for k, sigma in enumerate(kind.sigmas):
        assert solved.mean_return[k] == pytest.approx(closed.mean_return[start_class(sigma)], rel=1e-10)
    assert closed.step_mean == pytest.approx(solved.step_mean, rel=1e-10)


@pytest.mark.parametrize("alpha,beta", RATES)
def test_hit_law_from_the_zero_pair(alpha, beta):
    closed = diagonal_return_statistics(alpha, beta)
    law = closed.hit_distribution
    assert sum(law.values()) == pytest.approx(1.0)
    assert law[VelocityPair(0, 0)] == pytest.approx(2 * alpha / (2 * alpha + beta))
    assert law[VelocityPair(1, 1)] == pytest.approx(beta / (2 * (2 * alpha + beta)))
    assert law[VelocityPair(-1, -1)] == pytest.approx(law[VelocityPair(1, 1)])
    assert closed.quoted_total == pytest.approx((2 * alpha + 2 * beta) / (2 * alpha + beta))


def test_embedded_law_of_returns():
    alpha, beta = 0.8, 1.9
    solved = diagonal_return_solve(TumbleKind.finite(alpha, beta))
    assert solved.embedded_law.sum() == pytest.approx(1.0)
    assert solved.embedded_law[1] == pytest.approx(2 * alpha / (2 * alpha + beta))


@pytest.mark.parametrize("alpha,beta", RATES)
def test_mgf_expansion_gives_the_second_moment(alpha, beta):
    h = 1e-3
    _, second, _, _ = excursion_moments(alpha, beta)
    assert excursion_mgf(0.0, alpha, beta) == pytest.approx(1.0)
    curvature = (excursion_mgf(h, alpha, beta) + excursion_mgf(-h, alpha, beta) - 2.0) / h**2
    assert curvature == pytest.approx(second, rel=1e-4)


def test_mgf_refuses_the_pole():
    pole = excursion_pole(1.0, 1.0)
    assert 0 < pole < np.inf
    excursion_mgf(0.99 * np.sqrt(pole), 1.0, 1.0)
    with pytest.raises(PoleError):
        excursion_mgf(np.sqrt(pole), 1.0, 1.0)


def test_excursion_sample_statistics(rng):
    alpha, beta = 1.0, 2.0
    sample = sample_diagonal_excursions(alpha, beta, 40000, rng, chains=2000)
    assert len(sample) == 40000
    closed = diagonal_return_statistics(alpha, beta)
    stderr = sample.durations.std(ddof=1) / np.sqrt(len(sample))
    assert abs(sample.durations.mean() - closed.step_mean) < 5 * stderr

    mean, se = sample.moment(2)
    assert abs(mean - excursion_moments(alpha, beta)[1]) < 5 * se
    assert abs(sample.increments.mean()) < 5 * sample.increments.std() / np.sqrt(len(sample))
    assert abs(excursion_autocorrelation(sample.increments)) < 0.05

    freq = hit_frequencies(sample, start=1)
    for j, sigma in enumerate([(1, 1), (0, 0), (-1, -1)]):
        p, p_se = freq[j]
        assert abs(p - closed.hit_distribution[VelocityPair(*sigma)]) < 5 * p_se + 1e-12


def test_zero_excursions_follow_the_laplace_law(rng):
    alpha = 2.0
    check = zero_excursion_law_check(alpha, 4000, rng)
    assert check.samples == 4000
    assert check.statistic < 2.0 / np.sqrt(check.samples)
    assert abs(check.second_moment - 2.0 / alpha**2) < 5 * check.second_moment_stderr
    assert check.positive_fraction == pytest.approx(0.5, abs=0.05)


def test_query_validation(itp, ftp):
    with pytest.raises(DomainError):
        HittingQuery("nowhere", itp, (1, 1))
    with pytest.raises(DomainError):
        HittingQuery(JAM_AT_ZERO, itp, (1, 1), x=0.5)
    with pytest.raises(DomainError):
        HittingQuery(JAM_AT_ZERO, itp, (1, 1), x=2.0, ell=1.0)
    with pytest.raises(DomainError):
        HittingQuery(VELOCITY_AGREEMENT, itp, (0, 1))
    assert HittingQuery(JAM_AT_ZERO, itp, (1, -1), x=0.0, ell=1.0).satisfied_at_start
    assert HittingQuery(VELOCITY_AGREEMENT, ftp, (0, 0)).satisfied_at_start
    assert not HittingQuery(DIAGONAL_RETURN, ftp, (0, 0)).satisfied_at_start


def test_replica_respects_the_time_budget(itp, rng):
    query = HittingQuery(JAM_AT_ZERO, itp, (-1, 1), x=0.5, ell=1.0)
    with pytest.raises(EventBudgetError):
        hitting_time_replica(rng, query, 1e-9)


def test_monte_carlo_jam_time(itp, pool):
    query = HittingQuery(JAM_AT_ZERO, itp, (1, 1), x=0.5, ell=1.0)
    estimate = monte_carlo_hitting(query, 4000, 17, pool)
    exact = mean_hitting_time_citp(0.5, (1, 1), 1.0, 1.0)
    assert abs(estimate.mean - exact) < 5 * estimate.stderr


def test_monte_carlo_agreement_and_return(ftp, pool):
    agreement = monte_carlo_hitting(HittingQuery(VELOCITY_AGREEMENT, ftp, (1, -1)), 4000, 18, pool)
    assert abs(agreement.mean - mean_velocity_coupling_time_cftp(1, -1, 1.0, 1.0)) < 5 * agreement.stderr
    back = monte_carlo_hitting(HittingQuery(DIAGONAL_RETURN, ftp, (0, 0)), 4000, 19, pool)
    expected = diagonal_return_statistics(1.0, 1.0).mean_return["zero_pair"]
    assert abs(back.mean - expected) < 5 * back.stderr


def test_oracle_table_for_instantaneous_tumbles(itp, pool):
    rows = hitting_oracle_table(itp, 1.0, 1000, 5, pool)
    assert len(rows) == 12
    assert all(abs(row.z_score) < 5 for row in rows)
    frame = oracle_frame(rows)
    assert list(frame.columns) == ["query", "closed_form", "mc_mean", "mc_stderr", "z_score"]


def test_oracle_table_for_finite_tumbles(ftp, pool):
    rows = hitting_oracle_table(ftp, 1.0, 500, 6, pool)
    assert len(rows) == 3 + 4 + 1 + 2
    closed = diagonal_return_statistics(1.0, 1.0)
    step_row = next(r for r in rows if "between diagonal returns" in r.query)
    assert step_row.closed_form == pytest.approx(closed.step_mean)
    assert all(np.isfinite(r.mc_mean) for r in rows)
