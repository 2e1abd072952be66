"""
Hitting Times Service

Closed-form mean hitting and return times of the velocity and separation
processes, the excursion moment generating function of the relative
displacement between returns to the velocity diagonal, and Monte Carlo
estimators that check each of them.
"""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy import stats

from app.config import settings
from app.errors import DomainError, EventBudgetError, PoleError
from app.models.hitting import (
    DIAGONAL_RETURN,
    JAM_AT_ZERO,
    VELOCITY_AGREEMENT,
    DiagonalReturnSolve,
    DiagonalReturnStats,
    ExcursionSample,
    HittingEstimate,
    HittingQuery,
    OracleRow,
    ZeroExcursionCheck,
)
from app.models.pdmp import ContState, StateClass
from app.models.velocity import TumbleKind, VelocityPair
from app.services.pdmp_process import advance_clamped, classify
from app.services.replica_pool import ReplicaPool
from app.services.velocity_process import TumbleClock, pair_generator

logger = structlog.get_logger(__name__)

POLE_MARGIN = 1e-9

# f(x, sigma) = c0 + c1 x + c2 (2 ell x - x^2) for the jam-at-0 hitting time
_CITP_COEFFICIENTS = {
    VelocityPair(1, 1): lambda w, ell: (ell + 1.5 / w, 1.0, 0.5 * w),
    VelocityPair(1, -1): lambda w, ell: (0.0, 2.0, 0.5 * w),
    VelocityPair(-1, 1): lambda w, ell: (2.0 * ell + 2.0 / w, 0.0, 0.5 * w),
    VelocityPair(-1, -1): lambda w, ell: (ell + 1.5 / w, 1.0, 0.5 * w),
}


def _citp_coefficients(sigma, omega: float, ell: float) -> Tuple[float, float, float]:
    if not omega > 0 or not ell > 0:
        raise DomainError("omega and ell must be positive")
    sigma = TumbleKind.instantaneous(omega).validate_pair(sigma)
    return _CITP_COEFFICIENTS[sigma](omega, ell)


def mean_hitting_time_citp(x, sigma, omega: float, ell: float):
    """
    Mean time for the instantaneous-tumble separation process started at
    (x, sigma) to sit at 0 with velocity (1, -1).
    """
    c0, c1, c2 = _citp_coefficients(sigma, omega, ell)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr > ell):
        raise DomainError(f"x outside [0, {ell}]")
    value = c0 + c1 * x_arr + c2 * (2.0 * ell * x_arr - x_arr * x_arr)
    return float(value) if value.ndim == 0 else value


def _citp_derivative(x: np.ndarray, sigma, omega: float, ell: float) -> np.ndarray:
    _, c1, c2 = _citp_coefficients(sigma, omega, ell)
    return c1 + c2 * (2.0 * ell - 2.0 * x)


def hitting_bound_citp(omega: float, ell: float) -> Tuple[float, float, VelocityPair]:
    """Exact sup over starting states of the jam-at-0 mean hitting time, with its argmax."""
    best = (-np.inf, 0.0, VelocityPair(1, 1))
    for sigma in _CITP_COEFFICIENTS:
        _, c1, c2 = _citp_coefficients(sigma, omega, ell)
        vertex = min(ell, max(0.0, ell + c1 / (2.0 * c2)))
        for x in (0.0, ell, vertex):
            value = mean_hitting_time_citp(x, sigma, omega, ell)
            if value > best[0]:
                best = (value, x, sigma)
    return best


def hitting_time_residual(omega: float, ell: float, n_grid: int = 1000) -> Tuple[float, float]:
    """
    Residuals of the closed forms in the transport-jump system

        s * df_s/dx + omega * sum over one-particle flips (f_flip - f_s) + 1 = 0

    on a grid of [0, ell] (s the relative speed, nonzero only off the
    diagonal), and of the boundary conditions f(0, (1,-1)) = 0 and
    f(ell, (-1,1)) = f(ell, (1,-1)) + 2/omega. Returns (bulk, boundary).
    """
    x = np.linspace(0.0, ell, n_grid)
    f = {s: mean_hitting_time_citp(x, s, omega, ell) for s in _CITP_COEFFICIENTS}
    bulk = 0.0
    for (s1, s2), values in f.items():
        slope = s2 - s1
        flips = f[VelocityPair(-s1, s2)] + f[VelocityPair(s1, -s2)] - 2.0 * values
        residual = slope * _citp_derivative(x, (s1, s2), omega, ell) + omega * flips + 1.0
        bulk = max(bulk, float(np.abs(residual).max()))
    at_zero = abs(mean_hitting_time_citp(0.0, (1, -1), omega, ell))
    at_ell = abs(
        mean_hitting_time_citp(ell, (-1, 1), omega, ell) - mean_hitting_time_citp(ell, (1, -1), omega, ell) - 2.0 / omega
    )
    return bulk, max(at_zero, at_ell)


def mean_velocity_coupling_time_cftp(s0: int, s0_tilde: int, alpha: float, beta: float) -> float:
    """Mean time for two independent finite-tumble particles started at s0, s0_tilde to agree."""
    kind = TumbleKind.finite(alpha, beta)
    for s in (s0, s0_tilde):
        if s not in kind.alphabet:
            raise DomainError(f"velocity {s} not in {kind.alphabet}")
    if s0 == s0_tilde:
        return 0.0
    r = kind.r
    if abs(s0 - s0_tilde) == 1:
        return (4.0 * r + 1.0) / (alpha * (4.0 * r + 2.0))
    return (3.0 * r + 1.0) / (alpha * (2.0 * r + 1.0))


def _absorbing_solve(q: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean absorption times and absorption law, for starts outside target."""
    free = ~target
    q_ff = q[np.ix_(free, free)]
    means = np.linalg.solve(q_ff, -np.ones(free.sum()))
    law = np.linalg.solve(q_ff, -q[np.ix_(free, target)])
    return means, law


def velocity_coupling_time_solve(kind: TumbleKind) -> np.ndarray:
    """
    Mean agreement time of two independent particles for every start pair,
    by first-step analysis; rows and columns follow kind.alphabet.
    """
    q = pair_generator(kind)
    n = len(kind.alphabet)
    agree = np.array([s1 == s2 for s1, s2 in kind.sigmas])
    means, _ = _absorbing_solve(q, agree)
    table = np.zeros(n * n)
    table[~agree] = means
    return table.reshape(n, n)


def diagonal_return_solve(kind: TumbleKind) -> DiagonalReturnSolve:
    """
    Mean time to the diagonal {s1 == s2} and the state entered there, from
    every velocity pair; from a diagonal start, the first return after leaving.
    Also the stationary law of the diagonal states visited at successive
    returns and the mean time between returns under it.
    """
    q = pair_generator(kind)
    on_diagonal = np.array([s1 == s2 for s1, s2 in kind.sigmas])
    diagonal = tuple(s for s in kind.sigmas if s[0] == s[1])
    off_means, off_law = _absorbing_solve(q, on_diagonal)

    m = len(kind.sigmas)
    means = np.zeros(m)
    hits = np.zeros((m, len(diagonal)))
    means[~on_diagonal] = off_means
    hits[~on_diagonal] = off_law
    for d in np.flatnonzero(on_diagonal):
        rate = -q[d, d]
        jump = q[d].copy() / rate
        jump[d] = 0.0
        means[d] = 1.0 / rate + jump[~on_diagonal] @ off_means
        hits[d] = jump[~on_diagonal] @ off_law + jump[on_diagonal]

    embedded = hits[on_diagonal]
    system = np.vstack([embedded.T - np.eye(len(diagonal)), np.ones(len(diagonal))])
    rhs = np.zeros(len(diagonal) + 1)
    rhs[-1] = 1.0
    law = np.clip(np.linalg.lstsq(system, rhs, rcond=None)[0], 0.0, None)
    law = law / law.sum()
    return DiagonalReturnSolve(
        kind=kind,
        mean_return=means,
        hit_matrix=hits,
        diagonal=diagonal,
        embedded_law=law,
        step_mean=float(law @ means[on_diagonal]),
    )


def quoted_hit_distribution(alpha: float, beta: float) -> Dict[VelocityPair, float]:
    """Hit law on the diagonal as commonly quoted; it sums to (2a + 2b)/(2a + b)."""
    return {
        VelocityPair(1, 1): beta / (2.0 * alpha + beta),
        VelocityPair(0, 0): 2.0 * alpha / (2.0 * alpha + beta),
        VelocityPair(-1, -1): beta / (2.0 * alpha + beta),
    }


def diagonal_return_statistics(alpha: float, beta: float) -> DiagonalReturnStats:
    """
    Closed-form mean return times to the diagonal by start class, the hit law on
    the diagonal from (0, 0) and the mean time between successive returns.
    """
    kind = TumbleKind.finite(alpha, beta)
    r = kind.r
    scale = 1.0 / alpha + 1.0 / beta
    mean_return = {
        "zero_pair": scale * (2 * r * r + 5 * r + 1) / (4 * r * r + 6 * r + 2),
        "off_by_one": scale * (4 * r + 1) / (4 * r * r + 6 * r + 2),
        "moving_pair": scale * (3 * r + 1) / (2 * r * r + 3 * r + 1),
    }
    solved = diagonal_return_solve(kind)
    hit = solved.hit_distribution(VelocityPair(0, 0))
    quoted = quoted_hit_distribution(alpha, beta)
    total = sum(quoted.values())
    if abs(total - 1.0) > 1e-12:
        logger.warning(
            "quoted diagonal hit law is not normalized",
            alpha=alpha,
            beta=beta,
            quoted_total=total,
            quoted={f"{s[0]},{s[1]}": p for s, p in quoted.items()},
            solved={f"{s[0]},{s[1]}": p for s, p in hit.items()},
        )
    step_mean = (alpha + beta) ** 2 / (2 * alpha * alpha * beta + alpha * beta * beta)
    return DiagonalReturnStats(
        alpha=alpha,
        beta=beta,
        mean_return=mean_return,
        hit_distribution=hit,
        quoted_hit_distribution=quoted,
        step_mean=step_mean,
    )


def start_class(sigma) -> str:
    s1, s2 = sigma
    if s1 == s2 == 0:
        return "zero_pair"
    if abs(s1 - s2) == 1:
        return "off_by_one"
    return "moving_pair"


def _mgf_constants(alpha: float, beta: float) -> Tuple[float, float]:
    a = 4 * alpha**4 + 4 * alpha**3 * beta + alpha**2 * beta**2
    b = 2 * alpha**2 + 3 * alpha * beta + beta**2
    return a, b


def excursion_pole(alpha: float, beta: float) -> float:
    """Smallest positive lambda^2 at which the excursion MGF denominator vanishes."""
    a, b = _mgf_constants(alpha, beta)
    roots = np.roots([4.0, -4.0 * b, a])
    positive = sorted(float(u.real) for u in roots if abs(u.imag) < 1e-12 and u.real > 0)
    return positive[0] if positive else math.inf


def excursion_mgf(lam, alpha: float, beta: float):
    """E[exp(lam * D)] for the relative displacement D over one excursion off the diagonal."""
    lam = np.asarray(lam, dtype=float)
    a, b = _mgf_constants(alpha, beta)
    pole = excursion_pole(alpha, beta)
    u = lam * lam
    if np.any(u >= pole - POLE_MARGIN):
        raise PoleError(f"lambda^2 must stay below the pole {pole:.12g}")
    value = (a - 2.0 * b * u) / (a + 4.0 * u * u - 4.0 * b * u)
    return float(value) if value.ndim == 0 else value


def excursion_moments(alpha: float, beta: float) -> Tuple[float, float, float, float]:
    second = 4.0 * (alpha + beta) / (2 * alpha**3 + alpha**2 * beta)
    fourth = 96.0 * (alpha**2 + 4 * alpha * beta + 2 * beta**2) / (
        4 * alpha**6 + 4 * alpha**5 * beta + alpha**4 * beta**2
    )
    return 0.0, second, 0.0, fourth


def sample_diagonal_excursions(
    alpha: float, beta: float, n: int, rng: np.random.Generator, chains: Optional[int] = None
) -> ExcursionSample:
    """
    n consecutive excursions of the finite-tumble velocity pair between visits
    to the diagonal. Chains start from the stationary law of the diagonal
    state at returns and advance in lockstep, one jump per sweep.
    """
    if n < 1:
        raise DomainError(f"need at least one excursion, got {n}")
    solved = diagonal_return_solve(TumbleKind.finite(alpha, beta))
    chains = int(chains or min(n, 10_000))
    per_chain = -(-n // chains)
    diagonal_values = np.array([s[0] for s in solved.diagonal])

    start = rng.choice(len(diagonal_values), size=chains, p=solved.embedded_law)
    s1 = diagonal_values[start].copy()
    s2 = s1.copy()
    increments = np.zeros((chains, per_chain))
    durations = np.zeros((chains, per_chain))
    starts = np.zeros((chains, per_chain), dtype=np.int64)
    hits = np.zeros((chains, per_chain), dtype=np.int64)
    count = np.zeros(chains, dtype=np.int64)
    current = start.copy()
    acc_d = np.zeros(chains)
    acc_t = np.zeros(chains)

    while True:
        idx = np.flatnonzero(count < per_chain)
        if len(idx) == 0:
            break
        a1, a2 = s1[idx], s2[idx]
        r1 = np.where(a1 == 0, beta, alpha)
        r2 = np.where(a2 == 0, beta, alpha)
        total = r1 + r2
        dt = rng.standard_exponential(len(idx)) / total
        acc_d[idx] += (a2 - a1) * dt
        acc_t[idx] += dt
        first = rng.random(len(idx)) * total < r1
        up = rng.random(len(idx)) < 0.5
        jumper = np.where(first, a1, a2)
        new = np.where(jumper != 0, 0, np.where(up, 1, -1))
        a1 = np.where(first, new, a1)
        a2 = np.where(first, a2, new)
        s1[idx], s2[idx] = a1, a2

        done = idx[a1 == a2]
        k = count[done]
        entered = np.searchsorted(-diagonal_values, -s1[done])
        increments[done, k] = acc_d[done]
        durations[done, k] = acc_t[done]
        starts[done, k] = current[done]
        hits[done, k] = entered
        current[done] = entered
        acc_d[done] = 0.0
        acc_t[done] = 0.0
        count[done] += 1

    return ExcursionSample(
        increments=increments.ravel()[:n],
        durations=durations.ravel()[:n],
        starts=starts.ravel()[:n],
        hits=hits.ravel()[:n],
        chains=chains,
    )


def excursion_autocorrelation(d) -> float:
    """Lag-1 sample autocorrelation."""
    d = np.asarray(d, dtype=float)
    centered = d - d.mean()
    return float(np.dot(centered[:-1], centered[1:]) / np.dot(centered, centered))


def hit_frequencies(sample: ExcursionSample, start: int = 1) -> Dict[int, Tuple[float, float]]:
    """Empirical law of the diagonal state entered, for excursions leaving diagonal state `start`."""
    entered = sample.hits[sample.starts == start]
    n = len(entered)
    result = {}
    for j in range(3):
        p = float(np.mean(entered == j)) if n else math.nan
        result[j] = (p, math.sqrt(p * (1.0 - p) / n) if n else math.nan)
    return result


def zero_excursion_law_check(alpha: float, n: int, rng: np.random.Generator, beta: float = 1.0) -> ZeroExcursionCheck:
    """
    Integrals of one finite-tumble particle's velocity between consecutive
    visits to velocity 0, tested against the Laplace law with scale 1/alpha.
    """
    kind = TumbleKind.finite(alpha, beta)
    clock = TumbleClock(kind, 0, rng)
    chunk = 1.1 * n * (1.0 / alpha + 1.0 / beta) + 10.0 / min(alpha, beta)
    times, states = [np.zeros(1)], [np.zeros(1, dtype=np.int64)]
    horizon, found = 0.0, 0
    while found < n:
        horizon += chunk
        t, v = clock.events_until(horizon)
        times.append(t)
        states.append(v)
        found += int(np.count_nonzero(v == 0))
    t = np.concatenate(times)
    v = np.concatenate(states)
    moving = np.flatnonzero(v[:-1] != 0)
    d = (v[moving] * (t[moving + 1] - t[moving]))[:n]

    test = stats.kstest(d, "laplace", args=(0.0, 1.0 / alpha))
    squares = d * d
    result = ZeroExcursionCheck(
        statistic=float(test.statistic),
        pvalue=float(test.pvalue),
        samples=len(d),
        second_moment=float(squares.mean()),
        second_moment_stderr=float(squares.std(ddof=1) / math.sqrt(len(d))),
        positive_fraction=float(np.mean(d > 0)),
    )
    logger.info("zero excursion law", alpha=alpha, samples=len(d), ks=result.statistic, pvalue=result.pvalue)
    return result


def _fire_earliest(c1: TumbleClock, c2: TumbleClock) -> float:
    clock = c1 if c1.next_time <= c2.next_time else c2
    clock.fire()
    return clock.time


def _jam_at_zero_time(rng: np.random.Generator, query: HittingQuery, max_time: float) -> float:
    g1, g2 = rng.spawn(2)
    c1 = TumbleClock(query.kind, query.sigma[0], g1)
    c2 = TumbleClock(query.kind, query.sigma[1], g2)
    x, t, ell = query.x, 0.0, query.ell
    while True:
        sigma = VelocityPair(c1.state, c2.state)
        slope = sigma.relative_speed
        t_next = min(c1.next_time, c2.next_time)
        if sigma == query.target_sigma:
            if classify(ContState(x, sigma), ell) is StateClass.JAMMED_AT_0:
                return t
            if slope < 0 and t + x / -slope <= t_next:
                return t + x / -slope
        if t_next > max_time:
            raise EventBudgetError(f"no hit before t={max_time}")
        x, _ = advance_clamped(x, slope, t_next - t, ell)
        t = _fire_earliest(c1, c2)


def _agreement_time(rng: np.random.Generator, query: HittingQuery, max_time: float) -> float:
    g1, g2 = rng.spawn(2)
    c1 = TumbleClock(query.kind, query.sigma[0], g1)
    c2 = TumbleClock(query.kind, query.sigma[1], g2)
    t = 0.0
    while c1.state != c2.state:
        if min(c1.next_time, c2.next_time) > max_time:
            raise EventBudgetError(f"no agreement before t={max_time}")
        t = _fire_earliest(c1, c2)
    return t


def _diagonal_return_time(rng: np.random.Generator, query: HittingQuery, max_time: float) -> float:
    g1, g2 = rng.spawn(2)
    c1 = TumbleClock(query.kind, query.sigma[0], g1)
    c2 = TumbleClock(query.kind, query.sigma[1], g2)
    while True:
        if min(c1.next_time, c2.next_time) > max_time:
            raise EventBudgetError(f"no return before t={max_time}")
        t = _fire_earliest(c1, c2)
        if c1.state == c2.state:
            return t


_SAMPLERS = {
    JAM_AT_ZERO: _jam_at_zero_time,
    VELOCITY_AGREEMENT: _agreement_time,
    DIAGONAL_RETURN: _diagonal_return_time,
}


def hitting_time_replica(rng: np.random.Generator, query: HittingQuery, max_time: float) -> float:
    if query.satisfied_at_start:
        return 0.0
    return _SAMPLERS[query.target](rng, query, max_time)


def monte_carlo_hitting(
    query: HittingQuery,
    replicas: int,
    seed: int,
    pool: Optional[ReplicaPool] = None,
    max_time: Optional[float] = None,
    key: Tuple[int, ...] = (),
) -> HittingEstimate:
    """Mean and standard error of the hitting time over independent replicas."""
    if replicas < 1:
        raise DomainError(f"replicas must be positive, got {replicas}")
    max_time = settings.max_event_time if max_time is None else max_time
    pool = pool or ReplicaPool()
    times = pool.map_array(hitting_time_replica, replicas, seed, query, max_time, key=key)
    stderr = float(times.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    return HittingEstimate(mean=float(times.mean()), stderr=stderr, replicas=replicas)


def _row(name: str, closed_form: float, mean: float, stderr: float) -> OracleRow:
    if stderr > 0:
        z = (mean - closed_form) / stderr
    else:
        z = 0.0 if mean == closed_form else math.inf
    return OracleRow(query=name, closed_form=closed_form, mc_mean=mean, mc_stderr=stderr, z_score=z)


def hitting_oracle_table(
    kind: TumbleKind,
    ell: float,
    replicas: int,
    seed: int,
    pool: Optional[ReplicaPool] = None,
) -> List[OracleRow]:
    """
    Closed forms against Monte Carlo. Instantaneous tumbles: jam-at-0 times from
    three positions and every velocity pair. Finite tumbles: velocity agreement
    times, return times to the diagonal, the mean time between returns and the
    second and fourth excursion moments.
    """
    pool = pool or ReplicaPool()
    rows: List[OracleRow] = []
    if kind.is_instantaneous:
        for i, fraction in enumerate((0.25, 0.5, 0.75)):
            for j, sigma in enumerate(kind.sigmas):
                query = HittingQuery(JAM_AT_ZERO, kind, sigma, x=fraction * ell, ell=ell)
                estimate = monte_carlo_hitting(query, replicas, seed, pool, key=(10, i, j))
                exact = mean_hitting_time_citp(query.x, sigma, kind.omega, ell)
                rows.append(_row(query.describe(), exact, estimate.mean, estimate.stderr))
    else:
        alpha, beta = kind.alpha, kind.beta
        for j, sigma in enumerate([VelocityPair(-1, 1), VelocityPair(1, 0), VelocityPair(0, -1)]):
            query = HittingQuery(VELOCITY_AGREEMENT, kind, sigma)
            estimate = monte_carlo_hitting(query, replicas, seed, pool, key=(11, j))
            exact = mean_velocity_coupling_time_cftp(sigma[0], sigma[1], alpha, beta)
            rows.append(_row(query.describe(), exact, estimate.mean, estimate.stderr))

        closed = diagonal_return_statistics(alpha, beta)
        starts = [VelocityPair(0, 0), VelocityPair(1, 0), VelocityPair(1, 1), VelocityPair(1, -1)]
        for j, sigma in enumerate(starts):
            query = HittingQuery(DIAGONAL_RETURN, kind, sigma)
            estimate = monte_carlo_hitting(query, replicas, seed, pool, key=(12, j))
            rows.append(_row(query.describe(), closed.mean_return[start_class(sigma)], estimate.mean, estimate.stderr))

        sample = sample_diagonal_excursions(alpha, beta, replicas, np.random.default_rng([seed, 13]))
        _, second, _, fourth = excursion_moments(alpha, beta)
        durations = sample.durations
        rows.append(
            _row(f"{kind.label} mean time between diagonal returns", closed.step_mean,
                 float(durations.mean()), float(durations.std(ddof=1) / math.sqrt(len(durations))))
        )
        for k, exact in ((2, second), (4, fourth)):
            mean, stderr = sample.moment(k)
            rows.append(_row(f"{kind.label} excursion moment {k}", exact, mean, stderr))

    logger.info("hitting oracles", kind=kind.label, rows=len(rows),
                worst_z=max((abs(r.z_score) for r in rows), default=0.0))
    return rows
