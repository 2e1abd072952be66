"""
Coupling Service

Three couplings of the separation processes:

- lattice against continuum, sharing the velocity path, with the lattice
  member following the folded free walk while the velocities are equal;
- two lattice copies sharing Poisson rings, with velocities spliced per
  coordinate at their first agreement;
- two continuum copies with the same velocity splice.

Also the deviation bound between lattice and continuum and a streaming
coupling-time sampler for mixing estimation.
"""

from typing import Optional, Tuple, Union

import numpy as np
import structlog

from app.config import settings
from app.errors import DomainError, EventBudgetError
from app.models.coupling import (
    CONTINUOUS_CONTINUOUS,
    DISCRETE_CONTINUOUS,
    DISCRETE_DISCRETE,
    CoupledPair,
    CouplingTimes,
)
from app.models.lattice import LatticeParams, LatticeState
from app.models.pdmp import ContParams, ContState, PiecewiseLinearPath
from app.models.velocity import TumbleKind, VelocityPath
from app.services.lattice_process import (
    assemble_trajectory,
    embed_position,
    fold_p_L,
    initial_site,
    lattice_positions,
    poisson_rings,
    ring_steps,
)
from app.services.pdmp_process import advance_clamped, flow_rows, position_at
from app.services.velocity_process import (
    TumbleClock,
    merge_particle_events,
    particle_streams,
    sample_velocity_path,
)

logger = structlog.get_logger(__name__)


def _particle_events(path: VelocityPath, particle: int) -> Tuple[np.ndarray, np.ndarray]:
    """Change times and new values of one coordinate (initial value excluded)."""
    column = path.states[:, particle]
    changed = np.flatnonzero(np.diff(column) != 0) + 1
    return path.times[changed], column[changed]


def first_agreement(path_a: VelocityPath, path_b: VelocityPath, particle: int) -> float:
    """First time coordinate `particle` of the two paths agrees; inf if not on the horizon."""
    times = np.union1d(path_a.times, path_b.times)
    times = times[times <= min(path_a.horizon, path_b.horizon)]
    va = path_a.states[np.searchsorted(path_a.times, times, side="right") - 1, particle]
    vb = path_b.states[np.searchsorted(path_b.times, times, side="right") - 1, particle]
    hit = np.flatnonzero(va == vb)
    return float(times[hit[0]]) if len(hit) else np.inf


def splice_velocities(path_a: VelocityPath, path_b: VelocityPath) -> Tuple[VelocityPath, float, float]:
    """
    Replace coordinate i of path_b by that of path_a from its first agreement on.
    Returns the spliced path and (tau1, tau2).
    """
    horizon = min(path_a.horizon, path_b.horizon)
    taus = []
    columns = []
    for particle in (0, 1):
        tau = first_agreement(path_a, path_b, particle)
        taus.append(tau)
        t_own, v_own = _particle_events(path_b, particle)
        t_shared, v_shared = _particle_events(path_a, particle)
        keep_own = t_own <= tau
        keep_shared = (t_shared > tau) & (t_shared <= horizon)
        columns.append(
            (
                np.concatenate([t_own[keep_own], t_shared[keep_shared]]),
                np.concatenate([v_own[keep_own], v_shared[keep_shared]]),
            )
        )
    s0 = path_b.states[0]
    times, states = merge_particle_events(s0[0], *columns[0], s0[1], *columns[1])
    return VelocityPath(times, states, horizon), taus[0], taus[1]


def _is_diagonal_speed(s1: int, s2: int) -> bool:
    return s1 == s2 and s1 != 0


def couple_discrete_continuous(
    L: int,
    params: ContParams,
    x0: float,
    sigma0,
    horizon: float,
    rng: np.random.Generator,
) -> CoupledPair:
    """
    Lattice member started at floor((L-1) x0 / ell) + 1, moving at the shared
    rings; inside each velocity segment it follows clamp(z) or, while
    sigma = +-(1, 1), the fold p_L(z) of the free walk z restarted at the
    segment start.
    """
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    ContState(x0, params.kind.validate_pair(sigma0)).check(params.ell)
    lattice = LatticeParams(L=L, ell=params.ell, kind=params.kind, scaled=True)
    g_velocity, g_ring1, g_ring2 = rng.spawn(3)
    velocity = sample_velocity_path(params.kind, sigma0, horizon, g_velocity)
    ring1 = poisson_rings(lattice.gamma, horizon, g_ring1)
    ring2 = poisson_rings(lattice.gamma, horizon, g_ring2)

    times, xs, s1, s2, flags, _ = flow_rows(x0, velocity.times, velocity.states, horizon, params.ell)
    continuous = PiecewiseLinearPath(times, xs, s1, s2, flags, float(horizon), params.ell)

    y0 = initial_site(x0, L, params.ell)
    ring_times, _, step, segment = ring_steps(velocity, ring1, ring2)
    sites = np.empty(len(ring_times), dtype=np.int64)
    bounds = np.searchsorted(segment, np.arange(velocity.n_events + 2), side="left")
    y = y0
    for k in range(velocity.n_events + 1):
        lo, hi = bounds[k], bounds[k + 1]
        if lo == hi:
            continue
        z = y + np.cumsum(step[lo:hi])
        if _is_diagonal_speed(int(velocity.states[k, 0]), int(velocity.states[k, 1])):
            sites[lo:hi] = fold_p_L(z, L)
        else:
            sites[lo:hi] = np.clip(z, 1, L)
        y = int(sites[hi - 1])
    discrete = assemble_trajectory(velocity, ring_times, sites, y0)

    return CoupledPair(
        variant=DISCRETE_CONTINUOUS,
        horizon=float(horizon),
        ell=params.ell,
        velocity_a=velocity,
        velocity_b=velocity,
        member_a=continuous,
        member_b=discrete,
        rings=(ring1, ring2),
        L=L,
        tau1=0.0,
        tau2=0.0,
    )


def sup_deviation(pair: CoupledPair, T: Optional[float] = None) -> float:
    """
    sup over [0, T] of |i_L(y(t)) - x(t)|. The gap is affine between events,
    so it is evaluated at every event time using y before and after the event.
    """
    if pair.variant != DISCRETE_CONTINUOUS:
        raise DomainError("deviation is defined for the lattice-continuum coupling")
    T = pair.horizon if T is None else T
    if T < 0 or T > pair.horizon:
        raise DomainError(f"T={T} outside [0, {pair.horizon}]")
    path, lattice = pair.member_a, pair.member_b
    times = np.union1d(np.union1d(path.times, lattice.times), [0.0, T])
    times = times[times <= T]
    x = position_at(path, times)
    after = embed_position(lattice.site_at(times), pair.L, pair.ell)
    before = embed_position(lattice.site_before(times), pair.L, pair.ell)
    return float(max(np.max(np.abs(after - x)), np.max(np.abs(before - x))))


def scaling_limit_bound(
    epsilon: float,
    T: float,
    L: int,
    ell: float,
    eta: Union[float, TumbleKind],
) -> Tuple[float, float]:
    """
    Bound on P(sup_{t<=T} |i_L(y(t)) - x(t)| >= epsilon):
    (1/eps)(ell/(L-1) + 8 sqrt(T((eta T)^2 + 3 eta T + 1) ell/(L-1))).
    Returns the bound and the clock constant eta.
    """
    if epsilon <= 0 or T <= 0 or L < 2 or ell <= 0:
        raise DomainError("epsilon, T and ell must be positive and L at least 2")
    eta_value = eta.eta if isinstance(eta, TumbleKind) else float(eta)
    h = ell / (L - 1)
    eta_t = eta_value * T
    bound = (h + 8.0 * np.sqrt(T * (eta_t * eta_t + 3.0 * eta_t + 1.0) * h)) / epsilon
    return float(bound), eta_value


def _coupling_meet(member_a, member_b) -> float:
    """First time both lattice trajectories show the same full state."""
    times = np.union1d(member_a.times, member_b.times)
    ia = np.searchsorted(member_a.times, times, side="right") - 1
    ib = np.searchsorted(member_b.times, times, side="right") - 1
    same = (
        (member_a.y[ia] == member_b.y[ib])
        & (member_a.s1[ia] == member_b.s1[ib])
        & (member_a.s2[ia] == member_b.s2[ib])
    )
    hit = np.flatnonzero(same)
    return float(times[hit[0]]) if len(hit) else np.inf


def couple_discrete_discrete(
    params: LatticeParams,
    init_a: LatticeState,
    init_b: LatticeState,
    horizon: float,
    rng: np.random.Generator,
) -> CoupledPair:
    """Two lattice copies on shared rings; velocities of copy b spliced onto copy a per coordinate."""
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    init_a.check(params.L)
    init_b.check(params.L)
    g_a, g_b, g_ring1, g_ring2 = rng.spawn(4)
    velocity_a = sample_velocity_path(params.kind, init_a.sigma, horizon, g_a)
    own_b = sample_velocity_path(params.kind, init_b.sigma, horizon, g_b)
    velocity_b, tau1, tau2 = splice_velocities(velocity_a, own_b)
    ring1 = poisson_rings(params.gamma, horizon, g_ring1)
    ring2 = poisson_rings(params.gamma, horizon, g_ring2)

    ring_times, sites_a = lattice_positions(params.L, init_a.y, velocity_a, ring1, ring2)
    _, sites_b = lattice_positions(params.L, init_b.y, velocity_b, ring1, ring2)
    member_a = assemble_trajectory(velocity_a, ring_times, sites_a, init_a.y)
    member_b = assemble_trajectory(velocity_b, ring_times, sites_b, init_b.y)
    return CoupledPair(
        variant=DISCRETE_DISCRETE,
        horizon=float(horizon),
        ell=params.ell,
        velocity_a=velocity_a,
        velocity_b=velocity_b,
        member_a=member_a,
        member_b=member_b,
        rings=(ring1, ring2),
        L=params.L,
        tau1=tau1,
        tau2=tau2,
        tau_coupling=_coupling_meet(member_a, member_b),
    )


def ring_displacement(pair: CoupledPair, T: float) -> int:
    """Free-walk displacement from the shared rings on [0, T]: -s1 per clock-1 ring, +s2 per clock-2 ring."""
    if pair.rings is None:
        raise DomainError("pair has no Poisson rings")
    if T < 0 or T > pair.horizon:
        raise DomainError(f"T={T} outside [0, {pair.horizon}]")
    times, _, step, _ = ring_steps(pair.velocity_a, *pair.rings)
    return int(step[times <= T].sum())


def _continuous_meet(path_a: PiecewiseLinearPath, path_b: PiecewiseLinearPath,
                     velocity: VelocityPath, tau_sigma: float, ell: float) -> float:
    """
    Meeting time after tau_sigma. Both copies then share the velocity, so the
    gap only closes when the leading copy is held at a boundary.
    """
    if not np.isfinite(tau_sigma) or tau_sigma > velocity.horizon:
        return np.inf
    later = velocity.times[velocity.times > tau_sigma]
    starts = np.concatenate([[tau_sigma], later])
    stops = np.append(later, velocity.horizon)
    slopes = velocity.slopes[np.searchsorted(velocity.times, starts, side="right") - 1]
    xa = position_at(path_a, starts)
    xb = position_at(path_b, starts)
    with np.errstate(divide="ignore", invalid="ignore"):
        meet = np.where(
            xa == xb,
            0.0,
            np.where(
                slopes < 0,
                np.maximum(xa, xb) / np.abs(slopes),
                np.where(slopes > 0, (ell - np.minimum(xa, xb)) / slopes, np.inf),
            ),
        )
    hit = np.flatnonzero(meet <= stops - starts)
    return float(starts[hit[0]] + meet[hit[0]]) if len(hit) else np.inf


def couple_continuous_continuous(
    params: ContParams,
    init_a: ContState,
    init_b: ContState,
    horizon: float,
    rng: np.random.Generator,
) -> CoupledPair:
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    init_a.check(params.ell)
    init_b.check(params.ell)
    g_a, g_b = rng.spawn(2)
    velocity_a = sample_velocity_path(params.kind, init_a.sigma, horizon, g_a)
    own_b = sample_velocity_path(params.kind, init_b.sigma, horizon, g_b)
    velocity_b, tau1, tau2 = splice_velocities(velocity_a, own_b)

    members = []
    for init, velocity in ((init_a, velocity_a), (init_b, velocity_b)):
        rows = flow_rows(init.x, velocity.times, velocity.states, horizon, params.ell)
        members.append(PiecewiseLinearPath(*rows[:5], horizon=float(horizon), ell=params.ell))
    tau_coupling = _continuous_meet(members[0], members[1], velocity_a, max(tau1, tau2), params.ell)
    return CoupledPair(
        variant=CONTINUOUS_CONTINUOUS,
        horizon=float(horizon),
        ell=params.ell,
        velocity_a=velocity_a,
        velocity_b=velocity_b,
        member_a=members[0],
        member_b=members[1],
        tau1=tau1,
        tau2=tau2,
        tau_coupling=tau_coupling,
    )


def continuous_coupling_time(
    params: ContParams,
    init_a: ContState,
    init_b: ContState,
    rng: np.random.Generator,
    max_time: Optional[float] = None,
) -> CouplingTimes:
    """
    Streaming version of the continuum coupling that keeps no path.

    Runs the four particle clocks event by event until the copies meet.
    Times beyond max_time are reported as inf.
    """
    ell = params.ell
    kind = params.kind
    limit = settings.max_event_time if max_time is None else max_time
    if limit > settings.max_event_time:
        raise EventBudgetError(f"max_time {limit} exceeds the event budget {settings.max_event_time}")
    g_a, g_b = rng.spawn(2)
    a1, a2 = particle_streams(g_a)
    b1, b2 = particle_streams(g_b)
    clocks_a = [TumbleClock(kind, int(init_a.sigma[0]), a1), TumbleClock(kind, int(init_a.sigma[1]), a2)]
    clocks_b = [TumbleClock(kind, int(init_b.sigma[0]), b1), TumbleClock(kind, int(init_b.sigma[1]), b2)]
    coupled = [clocks_a[i].state == clocks_b[i].state for i in (0, 1)]
    taus = [0.0 if c else np.inf for c in coupled]

    x_a, x_b, t = float(init_a.x), float(init_b.x), 0.0
    if all(coupled) and x_a == x_b:
        return CouplingTimes(0.0, 0.0, 0.0, 0.0)

    while t <= limit:
        if all(coupled):
            slope = clocks_a[1].state - clocks_a[0].state
            t_next = min(clocks_a[0].next_time, clocks_a[1].next_time)
            if slope < 0:
                meet = max(x_a, x_b) / -slope
            elif slope > 0:
                meet = (ell - min(x_a, x_b)) / slope
            else:
                meet = np.inf
            if t + meet <= min(t_next, limit):
                tau_sigma = max(taus)
                return CouplingTimes(taus[0], taus[1], tau_sigma, t + meet)
            dt = t_next - t
            x_a, _ = advance_clamped(x_a, slope, dt, ell)
            x_b, _ = advance_clamped(x_b, slope, dt, ell)
            t = t_next
            (clocks_a[0] if clocks_a[0].next_time == t_next else clocks_a[1]).fire()
            continue

        candidates = [(clocks_a[i].next_time, "a", i) for i in (0, 1)]
        candidates += [(clocks_b[i].next_time, "b", i) for i in (0, 1) if not coupled[i]]
        t_next, member, i = min(candidates)
        dt = t_next - t
        x_a, _ = advance_clamped(x_a, clocks_a[1].state - clocks_a[0].state, dt, ell)
        slope_b = (clocks_a[1].state if coupled[1] else clocks_b[1].state) - (
            clocks_a[0].state if coupled[0] else clocks_b[0].state
        )
        x_b, _ = advance_clamped(x_b, slope_b, dt, ell)
        t = t_next
        (clocks_a if member == "a" else clocks_b)[i].fire()
        if not coupled[i] and clocks_a[i].state == clocks_b[i].state:
            coupled[i] = True
            taus[i] = t
            if all(coupled) and x_a == x_b:
                return CouplingTimes(taus[0], taus[1], t, t)

    logger.debug("coupling not reached", max_time=limit, tau1=taus[0], tau2=taus[1])
    return CouplingTimes(taus[0], taus[1], max(taus), np.inf)
