"""
PDMP Process Service

Event-driven simulation of the continuous separation process by the clamped
min-max flow between velocity events. Clamp times are solved in closed form,
so paths carry no time-stepping error. Long runs can stream their occupation
statistics into an OccupationAccumulator instead of keeping breakpoints.
"""

from typing import List, Optional, Tuple

import numpy as np
import structlog

from app.config import settings
from app.errors import DomainError
from app.models.measures import DiscretizedMeasure
from app.models.pdmp import (
    CLAMP_AT_ELL,
    CLAMP_AT_ZERO,
    NO_CLAMP,
    ClampEvent,
    ContinuousRun,
    ContParams,
    ContState,
    PiecewiseLinearPath,
    StateClass,
)
from app.models.velocity import TumbleKind, VelocityPair, VelocityPath
from app.services.velocity_process import (
    TumbleClock,
    merge_particle_events,
    particle_streams,
    sigma_indices,
)

logger = structlog.get_logger(__name__)

EVENTS_PER_CHUNK = 4096


def classify(state: ContState, ell: float) -> StateClass:
    """
    Jam class of a state; boundary states whose flow re-enters count as bulk.
    Positions within boundary_tolerance * ell of 0 or ell count as on the boundary.
    """
    state.check(ell)
    slope = state.slope
    tol = settings.boundary_tolerance * ell
    if state.x <= tol and slope <= 0:
        return StateClass.JAMMED_AT_0
    if state.x >= ell - tol and slope >= 0:
        return StateClass.JAMMED_AT_L
    return StateClass.BULK


def _snap(x: float, slope: int, ell: float, tol: float) -> float:
    if slope < 0 and x <= tol:
        return 0.0
    if slope > 0 and x >= ell - tol:
        return ell
    return x


def advance_clamped(x: float, slope: int, dt: float, ell: float) -> Tuple[float, Optional[ClampEvent]]:
    if slope == 0:
        return x, None
    if slope > 0:
        if x >= ell:
            return ell, None
        hit = (ell - x) / slope
        if hit < dt:
            return ell, ClampEvent(hit, ell)
        return min(x + slope * dt, ell), None
    if x <= 0.0:
        return 0.0, None
    hit = x / -slope
    if hit < dt:
        return 0.0, ClampEvent(hit, 0.0)
    return max(x + slope * dt, 0.0), None


def flow_segment(x0: float, sigma, dt: float, ell: float) -> Tuple[float, List[ClampEvent]]:
    """
    Clamped affine flow over dt at constant velocity.

    Returns the end position and the clamp event (offset from the segment
    start, boundary), if the affine value leaves [0, ell] before dt.
    """
    if not 0.0 <= x0 <= ell:
        raise DomainError(f"x0={x0} outside [0, {ell}]")
    if dt < 0:
        raise DomainError(f"dt must be nonnegative, got {dt}")
    slope = int(sigma[1]) - int(sigma[0])
    x0 = _snap(float(x0), slope, ell, settings.boundary_tolerance * ell)
    x1, clamp = advance_clamped(x0, slope, float(dt), ell)
    return x1, ([clamp] if clamp is not None else [])


def flow_rows(x0: float, seg_times: np.ndarray, seg_states: np.ndarray, t_end: float, ell: float):
    """
    Flow through consecutive velocity segments.

    Returns (times, x, s1, s2, clamp_flag, x_end): one row per segment start
    plus one per clamp.
    """
    tol = settings.boundary_tolerance * ell
    times, xs, s1s, s2s, flags = [], [], [], [], []
    x = float(x0)
    n = len(seg_times)
    for k in range(n):
        start = float(seg_times[k])
        stop = float(seg_times[k + 1]) if k + 1 < n else t_end
        s1, s2 = int(seg_states[k, 0]), int(seg_states[k, 1])
        slope = s2 - s1
        x = _snap(x, slope, ell, tol)
        times.append(start)
        xs.append(x)
        s1s.append(s1)
        s2s.append(s2)
        flags.append(NO_CLAMP)
        x, clamp = advance_clamped(x, slope, stop - start, ell)
        if clamp is not None:
            times.append(start + clamp.time)
            xs.append(clamp.boundary)
            s1s.append(s1)
            s2s.append(s2)
            flags.append(CLAMP_AT_ZERO if clamp.boundary == 0.0 else CLAMP_AT_ELL)
    return (
        np.asarray(times),
        np.asarray(xs),
        np.asarray(s1s, dtype=np.int64),
        np.asarray(s2s, dtype=np.int64),
        np.asarray(flags, dtype=np.int64),
        x,
    )


class OccupationAccumulator:
    """
    Time spent per velocity pair in the atoms at 0 and ell and in each bulk bin.

    Accumulators over disjoint time ranges merge by addition.
    """

    ROW_BLOCK = 512

    def __init__(self, kind: TumbleKind, ell: float, bins: int):
        if bins < 1:
            raise DomainError(f"bins must be at least 1, got {bins}")
        self.kind = kind
        self.ell = float(ell)
        self.edges = np.linspace(0.0, self.ell, bins + 1)
        m = len(kind.sigmas)
        self.atoms0 = np.zeros(m)
        self.atomsL = np.zeros(m)
        self.bulk = np.zeros((m, bins))
        self.total_time = 0.0

    @property
    def bins(self) -> int:
        return len(self.edges) - 1

    def add_rows(self, times, x, s1, s2, t_end: float) -> None:
        """Add the segments [times[k], times[k+1]) with the last ending at t_end."""
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return
        x = np.asarray(x, dtype=float)
        slopes = np.asarray(s2) - np.asarray(s1)
        durations = np.append(times[1:], t_end) - times
        k = sigma_indices(self.kind, s1, s2)

        at0 = (x == 0.0) & (slopes <= 0)
        atL = (x == self.ell) & (slopes >= 0) & ~at0
        np.add.at(self.atoms0, k[at0], durations[at0])
        np.add.at(self.atomsL, k[atL], durations[atL])

        free = ~(at0 | atL)
        resting = free & (slopes == 0)
        if resting.any():
            j = np.clip(np.searchsorted(self.edges, x[resting], side="right") - 1, 0, self.bins - 1)
            np.add.at(self.bulk, (k[resting], j), durations[resting])

        moving = np.flatnonzero(free & (slopes != 0) & (durations > 0))
        for lo_row in range(0, len(moving), self.ROW_BLOCK):
            rows = moving[lo_row:lo_row + self.ROW_BLOCK]
            x_start = x[rows]
            x_stop = np.clip(x_start + slopes[rows] * durations[rows], 0.0, self.ell)
            lo = np.minimum(x_start, x_stop)[:, None]
            hi = np.maximum(x_start, x_stop)[:, None]
            overlap = np.clip(self.edges[None, 1:], lo, hi) - np.clip(self.edges[None, :-1], lo, hi)
            np.add.at(self.bulk, k[rows], overlap / np.abs(slopes[rows])[:, None])

        self.total_time += float(durations.sum())

    def merge(self, other: "OccupationAccumulator") -> "OccupationAccumulator":
        if other.kind != self.kind or other.ell != self.ell or not np.array_equal(other.edges, self.edges):
            raise DomainError("accumulators cover different grids")
        merged = OccupationAccumulator(self.kind, self.ell, self.bins)
        merged.atoms0 = self.atoms0 + other.atoms0
        merged.atomsL = self.atomsL + other.atomsL
        merged.bulk = self.bulk + other.bulk
        merged.total_time = self.total_time + other.total_time
        return merged

    def to_measure(self) -> DiscretizedMeasure:
        if self.total_time <= 0:
            raise DomainError("occupation of a zero-length path is undefined")
        scale = 1.0 / self.total_time
        return DiscretizedMeasure(
            ell=self.ell,
            sigmas=self.kind.sigmas,
            edges=self.edges.copy(),
            atoms0=self.atoms0 * scale,
            atomsL=self.atomsL * scale,
            bulk=self.bulk * scale,
        )


def _chunk_length(kind: TumbleKind) -> float:
    fastest = max(kind.exit_rate(s) for s in kind.alphabet)
    return EVENTS_PER_CHUNK / (2.0 * fastest)


def simulate_continuous(
    params: ContParams,
    init: ContState,
    horizon: float,
    rng: np.random.Generator,
    accumulator: Optional[OccupationAccumulator] = None,
    record: bool = True,
    swap_particles: bool = False,
) -> ContinuousRun:
    """
    Exact simulation on [0, horizon].

    Velocity events come from the two particle clocks; between them the
    separation follows the clamped flow. With record=False only the final
    state and the optional accumulator are kept.
    """
    if horizon <= 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    init.check(params.ell)
    kind, ell = params.kind, params.ell
    s1_0, s2_0 = kind.validate_pair(init.sigma)
    g1, g2 = particle_streams(rng, swap_particles)
    clocks = (TumbleClock(kind, s1_0, g1), TumbleClock(kind, s2_0, g2))

    chunk = _chunk_length(kind)
    path_parts, velocity_parts = [], []
    t0, x, sigma = 0.0, float(init.x), (s1_0, s2_0)
    while t0 < horizon:
        t_end = min(horizon, t0 + chunk)
        e1, v1 = clocks[0].events_until(t_end)
        e2, v2 = clocks[1].events_until(t_end)
        seg_times, seg_states = merge_particle_events(sigma[0], e1, v1, sigma[1], e2, v2, start=t0)
        times, xs, s1, s2, flags, x = flow_rows(x, seg_times, seg_states, t_end, ell)
        if accumulator is not None:
            accumulator.add_rows(times, xs, s1, s2, t_end)
        if record:
            skip = 0 if t0 == 0.0 else 1
            path_parts.append((times[skip:], xs[skip:], s1[skip:], s2[skip:], flags[skip:]))
            velocity_parts.append((seg_times[1:], seg_states[1:]))
        sigma = (int(seg_states[-1, 0]), int(seg_states[-1, 1]))
        t0 = t_end

    final_state = ContState(x, VelocityPair(*sigma))
    run = ContinuousRun(params=params, init=init, horizon=float(horizon), final_state=final_state,
                        accumulator=accumulator)
    if record:
        columns = [np.concatenate([part[i] for part in path_parts]) for i in range(5)]
        run.path = PiecewiseLinearPath(*columns, horizon=float(horizon), ell=ell)
        v_times = np.concatenate([[0.0]] + [part[0] for part in velocity_parts])
        v_states = np.vstack([np.array([[s1_0, s2_0]])] + [part[1] for part in velocity_parts])
        run.velocity = VelocityPath(v_times, v_states.astype(np.int64), float(horizon), _clocks=clocks)
    return run


def position_at(path: PiecewiseLinearPath, t):
    """Exact x(t) for scalar or array t in [0, horizon]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > path.horizon):
        raise DomainError(f"t outside [0, {path.horizon}]")
    k = np.searchsorted(path.times, t_arr, side="right") - 1
    x = np.clip(path.x[k] + path.slopes[k] * (t_arr - path.times[k]), 0.0, path.ell)
    return float(x) if np.ndim(x) == 0 else x


def state_at(path: PiecewiseLinearPath, t: float) -> ContState:
    k = int(np.searchsorted(path.times, t, side="right") - 1)
    return ContState(position_at(path, t), VelocityPair(int(path.s1[k]), int(path.s2[k])))


def occupation_measure(run: ContinuousRun, bins: int) -> DiscretizedMeasure:
    """Empirical occupation of a recorded run: atoms per sigma plus exact bin overlaps."""
    if run.path is None:
        if run.accumulator is None:
            raise DomainError("run has neither a recorded path nor an accumulator")
        return run.accumulator.to_measure()
    path = run.path
    if path.horizon <= 0:
        raise DomainError("occupation of a zero-length path is undefined")
    accumulator = OccupationAccumulator(run.params.kind, path.ell, bins)
    accumulator.add_rows(path.times, path.x, path.s1, path.s2, path.horizon)
    return accumulator.to_measure()


def jammed_fraction(path: PiecewiseLinearPath) -> Tuple[float, float]:
    """Fractions of [0, horizon] spent jammed at 0 and at ell."""
    durations = path.durations()
    slopes = path.slopes
    at0 = (path.x == 0.0) & (slopes <= 0)
    atL = (path.x == path.ell) & (slopes >= 0)
    return float(durations[at0].sum() / path.horizon), float(durations[atL].sum() / path.horizon)


def empirical_measure(x, s1, s2, kind: TumbleKind, ell: float, bins: int) -> DiscretizedMeasure:
    """Discretized law of a batch of states; jammed states go to the atoms."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        raise DomainError("empirical measure of an empty batch")
    accumulator = OccupationAccumulator(kind, ell, bins)
    s1, s2 = np.asarray(s1), np.asarray(s2)
    slopes = s2 - s1
    k = sigma_indices(kind, s1, s2)
    at0 = (x == 0.0) & (slopes <= 0)
    atL = (x == ell) & (slopes >= 0) & ~at0
    free = ~(at0 | atL)
    np.add.at(accumulator.atoms0, k[at0], 1.0)
    np.add.at(accumulator.atomsL, k[atL], 1.0)
    j = np.clip(np.searchsorted(accumulator.edges, x[free], side="right") - 1, 0, bins - 1)
    np.add.at(accumulator.bulk, (k[free], j), 1.0)
    accumulator.total_time = float(len(x))
    return accumulator.to_measure()


def naive_flow(params: ContParams, velocity: VelocityPath, x0: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step clamped Euler integration of the separation, for cross-checks."""
    grid = np.arange(0.0, velocity.horizon + 0.5 * dt, dt)
    grid = grid[grid <= velocity.horizon]
    k = np.searchsorted(velocity.times, grid[:-1], side="right") - 1
    slopes = velocity.slopes[k]
    x = np.empty(len(grid))
    x[0] = x0
    for i, slope in enumerate(slopes):
        x[i + 1] = min(params.ell, max(0.0, x[i] + slope * dt))
    logger.debug("naive flow", steps=len(slopes), dt=dt)
    return grid, x


def log_run_summary(run: ContinuousRun) -> None:
    if run.path is not None:
        frac0, fracL = jammed_fraction(run.path)
        logger.info("continuous run", horizon=run.horizon, rows=len(run.path.times),
                    jammed_at_0=frac0, jammed_at_l=fracL)
