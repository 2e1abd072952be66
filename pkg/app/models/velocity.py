"""
Velocity domain types: tumble kinds, velocity pairs and velocity paths.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from app.errors import ConfigurationError, DomainError

INSTANTANEOUS = "instantaneous"
FINITE = "finite"


class VelocityPair(NamedTuple):
    """Velocities (s1, s2) of the two particles."""

    s1: int
    s2: int

    @property
    def relative_speed(self) -> int:
        return self.s2 - self.s1

    def swapped(self) -> "VelocityPair":
        return VelocityPair(self.s2, self.s1)


@dataclass(frozen=True)
class TumbleKind:
    """
    Velocity dynamics of a single particle.

    Instantaneous tumbles flip +1 <-> -1 at rate omega. Finite tumbles leave
    +-1 for 0 at rate alpha and leave 0 for each of +-1 at rate beta/2.
    """

    variant: str
    omega: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.variant == INSTANTANEOUS:
            if self.omega is None or not self.omega > 0:
                raise ConfigurationError(f"omega must be positive, got {self.omega}")
        elif self.variant == FINITE:
            if self.alpha is None or not self.alpha > 0:
                raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
            if self.beta is None or not self.beta > 0:
                raise ConfigurationError(f"beta must be positive, got {self.beta}")
        else:
            raise ConfigurationError(f"Unknown tumble kind: {self.variant}")

    @classmethod
    def instantaneous(cls, omega: float) -> "TumbleKind":
        return cls(INSTANTANEOUS, omega=float(omega))

    @classmethod
    def finite(cls, alpha: float, beta: float) -> "TumbleKind":
        return cls(FINITE, alpha=float(alpha), beta=float(beta))

    @property
    def is_instantaneous(self) -> bool:
        return self.variant == INSTANTANEOUS

    @property
    def alphabet(self) -> Tuple[int, ...]:
        """Single-particle velocities in matrix order."""
        return (1, -1) if self.is_instantaneous else (1, 0, -1)

    @property
    def sigmas(self) -> Tuple[VelocityPair, ...]:
        """Pair alphabet in Kronecker order: (1,1), (1,-1), ... for instantaneous."""
        return tuple(VelocityPair(a, b) for a in self.alphabet for b in self.alphabet)

    def sigma_index(self, sigma) -> int:
        s1, s2 = sigma
        n = len(self.alphabet)
        try:
            return self.alphabet.index(s1) * n + self.alphabet.index(s2)
        except ValueError:
            raise DomainError(f"{tuple(sigma)} is not a velocity pair of the {self.variant} kind")

    def validate_pair(self, sigma) -> VelocityPair:
        self.sigma_index(sigma)
        return VelocityPair(int(sigma[0]), int(sigma[1]))

    def exit_rate(self, s: int) -> float:
        if self.is_instantaneous:
            return self.omega
        return self.beta if s == 0 else self.alpha

    @property
    def eta(self) -> float:
        """Clock constant of the lattice-to-continuum deviation bound."""
        return 2.0 * self.omega if self.is_instantaneous else 2.0 * max(self.alpha, self.beta)

    @property
    def r(self) -> float:
        if self.is_instantaneous:
            raise DomainError("r = alpha/beta is only defined for finite tumbles")
        return self.alpha / self.beta

    @property
    def label(self) -> str:
        return "itp" if self.is_instantaneous else "ftp"

    def params(self) -> Dict[str, float]:
        if self.is_instantaneous:
            return {"omega": self.omega}
        return {"alpha": self.alpha, "beta": self.beta}

    def to_dict(self) -> Dict[str, Any]:
        return {"variant": self.variant, **self.params()}


@dataclass
class ParticlePath:
    """Single-particle velocity path: state states[k] holds on [times[k], times[k+1])."""

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        return int(self.states[np.searchsorted(self.times, t, side="right") - 1])


@dataclass
class VelocityPath:
    """
    Piecewise constant velocity pair on [0, horizon].

    times[0] = 0 holds the initial pair; times[k] for k >= 1 are the event times.
    The path keeps the particle clocks it was sampled from, so it can be
    extended beyond its horizon with the same randomness.
    """

    times: np.ndarray
    states: np.ndarray  # shape (n, 2)
    horizon: float
    _clocks: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def initial(self) -> VelocityPair:
        return VelocityPair(int(self.states[0, 0]), int(self.states[0, 1]))

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    @property
    def events(self) -> List[Tuple[float, VelocityPair]]:
        return [
            (float(t), VelocityPair(int(s[0]), int(s[1])))
            for t, s in zip(self.times[1:], self.states[1:])
        ]

    @property
    def slopes(self) -> np.ndarray:
        return self.states[:, 1] - self.states[:, 0]

    def state_at(self, t: float) -> VelocityPair:
        if t < 0 or t > self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        k = np.searchsorted(self.times, t, side="right") - 1
        return VelocityPair(int(self.states[k, 0]), int(self.states[k, 1]))

    def segments(self, t_end: Optional[float] = None) -> Iterator[Tuple[float, float, int, int]]:
        """Yield (start, stop, s1, s2) constancy intervals covering [0, t_end]."""
        t_end = self.horizon if t_end is None else t_end
        n = len(self.times)
        for k in range(n):
            start = float(self.times[k])
            if start >= t_end and k > 0:
                break
            stop = float(self.times[k + 1]) if k + 1 < n else self.horizon
            yield start, min(stop, t_end), int(self.states[k, 0]), int(self.states[k, 1])

    def extend(self, new_horizon: float) -> "VelocityPath":
        from app.services.velocity_process import extend_velocity_path

        return extend_velocity_path(self, new_horizon)

    def truncated(self, t_end: float) -> "VelocityPath":
        keep = np.searchsorted(self.times, t_end, side="right")
        return VelocityPath(self.times[:keep].copy(), self.states[:keep].copy(), float(t_end))
