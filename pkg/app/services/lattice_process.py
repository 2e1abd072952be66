"""
Lattice Process Service

Discrete separation chain on {1..L} x Sigma: clamp moves at the rings of two
Poisson clocks, velocity flips from the pair generator, the sparse generator
of the whole chain and its stationary law.
"""

from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import expm_multiply, spsolve

from app.config import settings
from app.errors import ConvergenceBudgetError, DomainError, SingularSolveError
from app.models.lattice import LatticeParams, LatticeState, LatticeTrajectory, StationaryVector
from app.models.velocity import VelocityPair, VelocityPath
from app.services.velocity_process import pair_generator, sample_velocity_path, sigma_indices

logger = structlog.get_logger(__name__)


def embed_position(k, L: int, ell: float):
    """Map lattice site k in 1..L affinely onto [0, ell]."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr > L):
        raise DomainError(f"site outside 1..{L}: {k}")
    value = ell * (k_arr - 1) / (L - 1)
    return float(value) if np.ndim(value) == 0 else value


def initial_site(x0: float, L: int, ell: float) -> int:
    """Lattice site paired with position x0 in the discrete-continuous coupling."""
    return min(L, int(np.floor((L - 1) * x0 / ell)) + 1)


def fold_p_L(z, L: int):
    """Reflect the integer line onto 1..L with period 2L."""
    z_arr = np.asarray(z, dtype=np.int64)
    k = np.mod(z_arr - 1, 2 * L) + 1
    folded = np.where(k <= L, k, 2 * L + 1 - k)
    return int(folded) if np.ndim(folded) == 0 else folded


def _clamp(y, L: int):
    return np.minimum(L, np.maximum(1, y))


def step_discrete(state: LatticeState, which_clock: int, L: int) -> LatticeState:
    """Move at a ring: clock 1 pushes by -s1, clock 2 by +s2, clamped to 1..L."""
    state.check(L)
    s1, s2 = state.sigma
    if which_clock == 1:
        y = state.y - s1
    elif which_clock == 2:
        y = state.y + s2
    else:
        raise DomainError(f"clock must be 1 or 2, got {which_clock}")
    return LatticeState(int(_clamp(y, L)), state.sigma)


def poisson_rings(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted ring times of a rate-`rate` Poisson clock on [0, horizon]."""
    if rate <= 0 or horizon <= 0:
        return np.empty(0)
    n = rng.poisson(rate * horizon)
    return np.sort(rng.random(n) * horizon)


def _clamped_walk(y0: int, steps: np.ndarray, L: int) -> np.ndarray:
    """Sequentially clamped partial sums; positions after each step."""
    if len(steps) == 0:
        return np.empty(0, dtype=np.int64)
    if np.all(steps >= 0) or np.all(steps <= 0):
        return _clamp(y0 + np.cumsum(steps), L).astype(np.int64)
    out = np.empty(len(steps), dtype=np.int64)
    y = y0
    for i, step in enumerate(steps):
        y = min(L, max(1, y + step))
        out[i] = y
    return out


def ring_steps(velocity: VelocityPath, ring1: np.ndarray, ring2: np.ndarray):
    """
    Merge both clocks' rings with the velocity at each ring.

    Returns (times, clock, step, segment) where step is -s1 for clock 1 and +s2
    for clock 2, evaluated with the velocity in force just before the ring.
    """
    times = np.concatenate([ring1, ring2])
    clock = np.concatenate([np.ones(len(ring1), dtype=np.int64), np.full(len(ring2), 2, dtype=np.int64)])
    order = np.argsort(times, kind="stable")
    times, clock = times[order], clock[order]
    segment = np.searchsorted(velocity.times, times, side="right") - 1
    s1 = velocity.states[segment, 0]
    s2 = velocity.states[segment, 1]
    step = np.where(clock == 1, -s1, s2)
    return times, clock, step.astype(np.int64), segment


def lattice_positions(
    L: int,
    y0: int,
    velocity: VelocityPath,
    ring1: np.ndarray,
    ring2: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Site after every ring, following the clamp rule segment by segment."""
    times, _, step, segment = ring_steps(velocity, ring1, ring2)
    sites = np.empty(len(times), dtype=np.int64)
    y = int(y0)
    bounds = np.searchsorted(segment, np.arange(velocity.n_events + 2), side="left")
    for k in range(velocity.n_events + 1):
        lo, hi = bounds[k], bounds[k + 1]
        if lo == hi:
            continue
        sites[lo:hi] = _clamped_walk(y, step[lo:hi], L)
        y = int(sites[hi - 1])
    return times, sites


def changes_only(times, y, s1, s2, horizon: float) -> LatticeTrajectory:
    """Drop rows that do not change the state."""
    y, s1, s2 = np.asarray(y), np.asarray(s1), np.asarray(s2)
    keep = np.ones(len(times), dtype=bool)
    keep[1:] = (np.diff(y) != 0) | (np.diff(s1) != 0) | (np.diff(s2) != 0)
    return LatticeTrajectory(
        times=np.asarray(times, dtype=float)[keep],
        y=y[keep].astype(np.int64),
        s1=s1[keep].astype(np.int64),
        s2=s2[keep].astype(np.int64),
        horizon=float(horizon),
    )


def assemble_trajectory(velocity: VelocityPath, ring_times, sites, y0: int) -> LatticeTrajectory:
    """Interleave velocity events and ring moves into one changes-only list."""
    v_times = velocity.times
    all_times = np.concatenate([v_times, ring_times])
    is_ring = np.concatenate([np.zeros(len(v_times), dtype=bool), np.ones(len(ring_times), dtype=bool)])
    order = np.argsort(all_times, kind="stable")
    all_times, is_ring = all_times[order], is_ring[order]

    ring_count = np.cumsum(is_ring)
    site_values = np.concatenate([[y0], sites])
    y = site_values[ring_count]
    segment = np.searchsorted(v_times, all_times, side="right") - 1
    s1 = velocity.states[segment, 0]
    s2 = velocity.states[segment, 1]
    return changes_only(all_times, y, s1, s2, velocity.horizon)


def simulate_discrete(
    params: LatticeParams,
    init: LatticeState,
    horizon: float,
    rng: np.random.Generator,
) -> LatticeTrajectory:
    """
    Exact simulation of the lattice chain on [0, horizon].

    Jammed rings are drawn and discarded so that the raw Poisson clocks match
    the ones shared by the couplings.
    """
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    init.check(params.L)
    g_velocity, g_ring1, g_ring2 = rng.spawn(3)
    velocity = sample_velocity_path(params.kind, init.sigma, horizon, g_velocity)
    ring1 = poisson_rings(params.gamma, horizon, g_ring1)
    ring2 = poisson_rings(params.gamma, horizon, g_ring2)
    ring_times, sites = lattice_positions(params.L, init.y, velocity, ring1, ring2)
    return assemble_trajectory(velocity, ring_times, sites, init.y)


def lattice_occupation(trajectory: LatticeTrajectory, params: LatticeParams) -> np.ndarray:
    """Holding-time weighted occupation, shaped (L, |Sigma|), summing to one."""
    ends = np.append(trajectory.times[1:], trajectory.horizon)
    holding = ends - trajectory.times
    m = params.n_sigmas
    index = (trajectory.y - 1) * m + sigma_indices(params.kind, trajectory.s1, trajectory.s2)
    occupation = np.bincount(index, weights=holding, minlength=params.n_states)
    return (occupation / trajectory.horizon).reshape(params.L, m)


def discrete_generator(params: LatticeParams) -> sp.csr_matrix:
    """
    Sparse generator over {1..L} x Sigma, state index (y-1)*|Sigma| + k.

    Ring moves that the clamp turns into null moves are left out.
    """
    L, m = params.L, params.n_sigmas
    sigmas = params.kind.sigmas
    s1 = np.array([s.s1 for s in sigmas])
    s2 = np.array([s.s2 for s in sigmas])

    y = np.repeat(np.arange(1, L + 1), m)
    k = np.tile(np.arange(m), L)
    source = np.arange(L * m)

    rows, cols, vals = [], [], []
    if params.gamma > 0:
        for target_y in (_clamp(y - s1[k], L), _clamp(y + s2[k], L)):
            moving = target_y != y
            rows.append(source[moving])
            cols.append(((target_y - 1) * m + k)[moving])
            vals.append(np.full(moving.sum(), params.gamma))

    q_pair = pair_generator(params.kind)
    q = sp.coo_matrix(q_pair - np.diag(np.diag(q_pair)))
    velocity_part = sp.kron(sp.identity(L), q, format="coo")
    rows.append(velocity_part.row)
    cols.append(velocity_part.col)
    vals.append(velocity_part.data)

    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(L * m, L * m)).tocsr()
    diagonal = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diagonal)).tocsr()


def is_irreducible(generator: sp.spmatrix) -> bool:
    n_components, _ = connected_components(generator != 0, directed=True, connection="strong")
    return n_components == 1


def _max_rate(generator: sp.spmatrix) -> float:
    return float(np.max(np.abs(generator.diagonal()))) or 1.0


def _direct_solve(generator: sp.csr_matrix) -> np.ndarray:
    n = generator.shape[0]
    system = generator.T.tolil()
    system[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    return spsolve(system.tocsc(), rhs)


def _power_solve(generator: sp.csr_matrix, tolerance: float) -> np.ndarray:
    n = generator.shape[0]
    rate = _max_rate(generator) * 1.05
    transition = (sp.identity(n, format="csr") + generator / rate).T.tocsr()
    pi = np.full(n, 1.0 / n)
    sweeps = settings.power_iteration_max_sweeps
    delta = np.inf
    for _ in range(sweeps):
        updated = transition @ pi
        updated /= updated.sum()
        delta = float(np.max(np.abs(updated - pi)))
        if delta < tolerance / rate:
            return updated
        pi = updated
    logger.warning("power iteration not converged", states=n, sweeps=sweeps, delta=delta,
                   target=tolerance / rate)
    raise ConvergenceBudgetError(
        f"power iteration stopped after {sweeps} sweeps at step change {delta:.3e}, target {tolerance / rate:.3e}"
    )


def stationary_distribution(params: LatticeParams) -> StationaryVector:
    """Solve pi G = 0, sum(pi) = 1."""
    generator = discrete_generator(params)
    scale = _max_rate(generator)
    tolerance = settings.stationary_residual_tolerance * max(1.0, scale)

    method = "direct" if generator.shape[0] <= settings.direct_solve_limit else "power"
    pi = _direct_solve(generator) if method == "direct" else _power_solve(generator, tolerance)
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(generator.T @ pi)))

    logger.info("stationary solve", L=params.L, kind=params.kind.variant, method=method,
                residual=residual, tolerance=tolerance)
    if residual > tolerance or np.any(pi < -tolerance):
        raise SingularSolveError(f"stationary residual {residual:.3e} exceeds {tolerance:.3e}")
    return StationaryVector(params=params, probs=np.clip(pi, 0.0, None).reshape(params.L, -1),
                            residual=residual, method=method)


def transient_distribution(params: LatticeParams, init: LatticeState, t: float) -> np.ndarray:
    """Exact law at time t started from init, shaped (L, |Sigma|)."""
    init.check(params.L)
    p0 = np.zeros(params.n_states)
    p0[params.state_index(init.y, init.sigma)] = 1.0
    pt = expm_multiply(discrete_generator(params).T * t, p0)
    return np.clip(pt, 0.0, None).reshape(params.L, -1)


def jammed_pair_rate(y: int, y_target: int, L: int, gamma: float) -> float:
    """Rate y -> y_target of the lattice chain while sigma = +-(1, 1)."""
    if y_target == y:
        return 0.0
    rate = 0.0
    for move in (-1, 1):
        if int(_clamp(y + move, L)) == y_target:
            rate += gamma
    return rate


def folded_walk_rate(z: int, y_target: int, L: int, gamma: float) -> float:
    """Rate at which a free +-1 walk at z enters the fold preimage of y_target."""
    if fold_p_L(z, L) == y_target:
        return 0.0
    return sum(gamma for move in (-1, 1) if fold_p_L(z + move, L) == y_target)


def ring_walk_bound(epsilon: float, T: float, gamma: float) -> float:
    """Bound on P(sup_{t<=T} |S(t)/gamma - I(t)| >= epsilon) for the unjammed ring walk."""
    if epsilon <= 0 or T < 0 or gamma <= 0:
        raise DomainError("epsilon and gamma must be positive, T nonnegative")
    return 2.0 / epsilon * np.sqrt(T / gamma)


def state_sequence(params: LatticeParams, y: Optional[int] = None):
    """All (y, sigma) states in generator order, or the Sigma fibre of one site."""
    sites = range(1, params.L + 1) if y is None else [y]
    return [LatticeState(site, VelocityPair(*sigma)) for site in sites for sigma in params.kind.sigmas]
