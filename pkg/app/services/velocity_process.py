"""
Velocity Process Service

Single-particle and pair velocity jump processes: generators, exact
event-driven path sampling from per-particle exponential clocks, velocity
integrals and the closed-form moment generating function of the
instantaneous-tumble integral.
"""

from typing import Optional, Tuple

import numpy as np
import structlog

from app.errors import DomainError
from app.models.velocity import ParticlePath, TumbleKind, VelocityPath

logger = structlog.get_logger(__name__)


def single_rate_matrix(kind: TumbleKind) -> np.ndarray:
    """Rate matrix over kind.alphabet, (+1, -1) or (+1, 0, -1)."""
    if kind.is_instantaneous:
        w = kind.omega
        return np.array([[-w, w], [w, -w]])
    a, b = kind.alpha, kind.beta
    return np.array(
        [
            [-a, a, 0.0],
            [b / 2, -b, b / 2],
            [0.0, a, -a],
        ]
    )


def pair_generator(kind: TumbleKind) -> np.ndarray:
    """Generator of two independent particles, indexed like kind.sigmas."""
    q = single_rate_matrix(kind)
    eye = np.eye(q.shape[0])
    return np.kron(q, eye) + np.kron(eye, q)


def stationary_velocity_law(kind: TumbleKind) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary law of one particle and of the independent pair."""
    if kind.is_instantaneous:
        single = np.array([0.5, 0.5])
    else:
        r = kind.r
        single = np.array([1.0, 2.0 * r, 1.0]) / (2.0 + 2.0 * r)
    return single, np.kron(single, single)


class TumbleClock:
    """
    Exact jump sampler for one particle's velocity.

    Holding times and jump directions are drawn from the particle's own stream
    in small blocks; the sequence of draws does not depend on how the clock is
    queried, so paths can be extended reproducibly.
    """

    BLOCK = 256

    def __init__(self, kind: TumbleKind, s0: int, rng: np.random.Generator, t0: float = 0.0):
        if s0 not in kind.alphabet:
            raise DomainError(f"velocity {s0} not in alphabet {kind.alphabet}")
        self.kind = kind
        self.rng = rng
        self.state = int(s0)
        self.time = float(t0)
        self._exp = np.empty(0)
        self._uni = np.empty(0)
        self._ie = 0
        self._iu = 0
        self.next_time = self.time + self._draw_exponential() / kind.exit_rate(self.state)

    def _draw_exponential(self) -> float:
        if self._ie >= len(self._exp):
            self._exp = self.rng.standard_exponential(self.BLOCK)
            self._ie = 0
        value = self._exp[self._ie]
        self._ie += 1
        return float(value)

    def _draw_uniform(self) -> float:
        if self._iu >= len(self._uni):
            self._uni = self.rng.random(self.BLOCK)
            self._iu = 0
        value = self._uni[self._iu]
        self._iu += 1
        return float(value)

    def fire(self) -> int:
        """Jump at next_time and return the new velocity."""
        self.time = self.next_time
        if self.kind.is_instantaneous:
            new = -self.state
        elif self.state != 0:
            new = 0
        else:
            new = 1 if self._draw_uniform() < 0.5 else -1
        self.state = new
        self.next_time = self.time + self._draw_exponential() / self.kind.exit_rate(new)
        return new

    def events_until(self, horizon: float) -> Tuple[np.ndarray, np.ndarray]:
        times, states = [], []
        while self.next_time <= horizon:
            states.append(self.fire())
            times.append(self.time)
        return np.asarray(times, dtype=float), np.asarray(states, dtype=np.int64)


def merge_particle_events(s1_0, t1, v1, s2_0, t2, v2, start: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Merge two single-particle event lists into pair (times, states) rows."""
    times = np.concatenate([t1, t2])
    order = np.argsort(times, kind="stable")
    times = times[order]
    s1_values = np.concatenate([[s1_0], v1]).astype(np.int64)
    s2_values = np.concatenate([[s2_0], v2]).astype(np.int64)
    s1 = s1_values[np.searchsorted(t1, times, side="right")]
    s2 = s2_values[np.searchsorted(t2, times, side="right")]
    all_times = np.concatenate([[start], times])
    states = np.column_stack([np.concatenate([[s1_0], s1]), np.concatenate([[s2_0], s2])])
    return all_times, states.astype(np.int64)


def sigma_indices(kind: TumbleKind, s1, s2) -> np.ndarray:
    """Vectorized kind.sigma_index over arrays of velocities."""
    alphabet = np.asarray(kind.alphabet)
    s1, s2 = np.asarray(s1), np.asarray(s2)
    i1 = np.argmax(s1[..., None] == alphabet, axis=-1)
    i2 = np.argmax(s2[..., None] == alphabet, axis=-1)
    return i1 * len(alphabet) + i2


def particle_streams(rng: np.random.Generator, swap_particles: bool = False):
    g1, g2 = rng.spawn(2)
    return (g2, g1) if swap_particles else (g1, g2)


def sample_particle_path(kind: TumbleKind, s0: int, horizon: float, rng: np.random.Generator) -> ParticlePath:
    """Exact single-particle velocity path on [0, horizon]."""
    if horizon < 0:
        raise DomainError(f"horizon must be nonnegative, got {horizon}")
    clock = TumbleClock(kind, s0, rng)
    t, v = clock.events_until(horizon)
    return ParticlePath(
        times=np.concatenate([[0.0], t]),
        states=np.concatenate([[int(s0)], v]).astype(np.int64),
        horizon=float(horizon),
    )


def combine_particle_paths(p1: ParticlePath, p2: ParticlePath) -> VelocityPath:
    horizon = min(p1.horizon, p2.horizon)
    keep1 = p1.times[1:] <= horizon
    keep2 = p2.times[1:] <= horizon
    times, states = merge_particle_events(
        p1.states[0], p1.times[1:][keep1], p1.states[1:][keep1],
        p2.states[0], p2.times[1:][keep2], p2.states[1:][keep2],
    )
    return VelocityPath(times=times, states=states, horizon=horizon)


def sample_velocity_path(
    kind: TumbleKind,
    sigma0,
    horizon: float,
    rng: np.random.Generator,
    swap_particles: bool = False,
) -> VelocityPath:
    """
    Sample the velocity pair on [0, horizon].

    Each particle flips on its own exponential clocks driven by its own
    sub-stream of rng. With swap_particles the two sub-streams are exchanged,
    which maps a path started at (s1, s2) onto the mirrored path started at
    (s2, s1).
    """
    if horizon < 0:
        raise DomainError(f"horizon must be nonnegative, got {horizon}")
    s1_0, s2_0 = kind.validate_pair(sigma0)
    g1, g2 = particle_streams(rng, swap_particles)
    c1 = TumbleClock(kind, s1_0, g1)
    c2 = TumbleClock(kind, s2_0, g2)
    t1, v1 = c1.events_until(horizon)
    t2, v2 = c2.events_until(horizon)
    times, states = merge_particle_events(s1_0, t1, v1, s2_0, t2, v2)
    return VelocityPath(times=times, states=states, horizon=float(horizon), _clocks=(c1, c2))


def extend_velocity_path(path: VelocityPath, new_horizon: float) -> VelocityPath:
    """Extend a sampled path using the clocks it retained."""
    if new_horizon <= path.horizon:
        return path.truncated(new_horizon)
    if path._clocks is None:
        raise DomainError("path does not carry its clocks and cannot be extended")
    logger.debug("extending velocity path", horizon=path.horizon, new_horizon=new_horizon)
    c1, c2 = path._clocks
    t1, v1 = c1.events_until(new_horizon)
    t2, v2 = c2.events_until(new_horizon)
    last = path.states[-1]
    times, states = merge_particle_events(last[0], t1, v1, last[1], t2, v2, start=path.times[-1])
    return VelocityPath(
        times=np.concatenate([path.times, times[1:]]),
        states=np.concatenate([path.states, states[1:]]),
        horizon=float(new_horizon),
        _clocks=path._clocks,
    )


def _durations_until(times: np.ndarray, horizon: float, t: float) -> np.ndarray:
    ends = np.append(times[1:], horizon)
    return np.clip(np.minimum(ends, t) - times, 0.0, None)


def velocity_integral(path: VelocityPath, t: float) -> float:
    """I(t), the integral of s2 - s1 over [0, t]."""
    if t < 0 or t > path.horizon:
        raise DomainError(f"t={t} outside [0, {path.horizon}]")
    return float(np.dot(path.slopes, _durations_until(path.times, path.horizon, t)))


def particle_integral(path: VelocityPath, t: float, particle: int = 1) -> float:
    """Integral of one particle's velocity over [0, t]."""
    if particle not in (1, 2):
        raise DomainError(f"particle must be 1 or 2, got {particle}")
    if t < 0 or t > path.horizon:
        raise DomainError(f"t={t} outside [0, {path.horizon}]")
    durations = _durations_until(path.times, path.horizon, t)
    return float(np.dot(path.states[:, particle - 1], durations))


def integral_range(path: VelocityPath, T: float) -> float:
    """sup over t1 <= t2 <= T of |I(t2) - I(t1)|."""
    if T < 0 or T > path.horizon:
        raise DomainError(f"T={T} outside [0, {path.horizon}]")
    mask = path.times <= T
    knots = np.append(path.times[mask], T)
    slopes = path.slopes[mask]
    values = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    return float(values.max() - values.min())


def mgf_velocity_integral(omega: float, s0: int, zeta: float, t: float) -> float:
    """
    E[exp(zeta * I(t))] for one instantaneous-tumble particle started at s0,
    where I(t) is the integral of its velocity.
    """
    if s0 not in (1, -1):
        raise DomainError(f"s0 must be +1 or -1, got {s0}")
    if omega <= 0 or t < 0:
        raise DomainError("omega must be positive and t nonnegative")
    root = np.sqrt(zeta * zeta + omega * omega)
    grow = np.exp(t * (root - omega))
    decay = np.exp(-t * (root + omega))
    sinh_part = 0.5 * (grow - decay)
    cosh_part = 0.5 * (grow + decay)
    return float((omega + s0 * zeta) * sinh_part / root + cosh_part)


def velocity_integral_moments(omega: float, s0: int, t: float) -> Tuple[float, float, float, float]:
    """First four moments of I(t) from derivatives of the MGF at zero."""
    if s0 not in (1, -1):
        raise DomainError(f"s0 must be +1 or -1, got {s0}")
    if omega <= 0 or t < 0:
        raise DomainError("omega must be positive and t nonnegative")
    e = np.exp(-2.0 * omega * t)
    ch = 0.5 * (1.0 + e)  # exp(-wt) cosh(wt)
    sh = 0.5 * (1.0 - e)  # exp(-wt) sinh(wt)
    w = omega
    m1 = s0 * sh / w
    m2 = t / w - sh / w**2
    m3 = 3.0 * s0 * (t * ch / w**2 - sh / w**3)
    m4 = 3.0 * (t * t / w**2 - t / w**3 - 2.0 * t * ch / w**3 + 3.0 * sh / w**4)
    return float(m1), float(m2), float(m3), float(m4)


def occupation_of_first_particle(path: VelocityPath, kind: TumbleKind, t: Optional[float] = None) -> np.ndarray:
    """Fraction of [0, t] that particle 1 spends in each velocity of kind.alphabet."""
    t = path.horizon if t is None else t
    durations = _durations_until(path.times, path.horizon, t)
    return np.array([durations[path.states[:, 0] == s].sum() for s in kind.alphabet]) / t
