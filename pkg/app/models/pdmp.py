"""
Continuous-space domain types: separation on [0, ell], jam classes and
exact piecewise-linear paths.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from app.config import settings
from app.errors import ConfigurationError, DomainError
from app.models.velocity import TumbleKind, VelocityPair, VelocityPath

NO_CLAMP = 0
CLAMP_AT_ZERO = 1
CLAMP_AT_ELL = 2


@dataclass(frozen=True)
class ContParams:
    ell: float
    kind: TumbleKind

    def __post_init__(self):
        if not self.ell > 0:
            raise ConfigurationError(f"ell must be positive, got {self.ell}")

    @property
    def boundary_tolerance(self) -> float:
        return settings.boundary_tolerance * self.ell


@dataclass(frozen=True)
class ContState:
    x: float
    sigma: VelocityPair

    def check(self, ell: float) -> "ContState":
        if not 0.0 <= self.x <= ell:
            raise DomainError(f"x={self.x} outside [0, {ell}]")
        return self

    @property
    def slope(self) -> int:
        return self.sigma[1] - self.sigma[0]


class StateClass(str, Enum):
    BULK = "bulk"
    JAMMED_AT_0 = "jammed_at_0"
    JAMMED_AT_L = "jammed_at_l"


class ClampEvent(NamedTuple):
    time: float
    boundary: float


@dataclass
class PiecewiseLinearPath:
    """
    Exact separation path.

    Row k starts at times[k] with position x[k] and velocity (s1[k], s2[k]);
    until times[k+1] the position is clip(x[k] + (s2[k]-s1[k])(t-times[k]), 0, ell).
    Rows are written at every velocity event (clamp_flag 0) and wherever the
    affine value reaches a boundary (clamp_flag 1 at 0, 2 at ell).
    """

    times: np.ndarray
    x: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    clamp_flag: np.ndarray
    horizon: float
    ell: float

    @property
    def slopes(self) -> np.ndarray:
        return self.s2 - self.s1

    @property
    def clamp_events(self):
        hits = np.flatnonzero(self.clamp_flag != NO_CLAMP)
        return [
            ClampEvent(float(self.times[k]), 0.0 if self.clamp_flag[k] == CLAMP_AT_ZERO else self.ell)
            for k in hits
        ]

    def durations(self) -> np.ndarray:
        return np.append(self.times[1:], self.horizon) - self.times

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t_break": self.times,
                "x": self.x,
                "s1": self.s1,
                "s2": self.s2,
                "clamp_flag": self.clamp_flag,
            }
        )


@dataclass
class StateBatch:
    """Many continuous states as parallel arrays."""

    x: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    def states(self):
        return [ContState(float(x), VelocityPair(int(a), int(b))) for x, a, b in zip(self.x, self.s1, self.s2)]

    @classmethod
    def from_states(cls, states) -> "StateBatch":
        states = list(states)
        return cls(
            np.array([s.x for s in states], dtype=float),
            np.array([s.sigma[0] for s in states], dtype=np.int64),
            np.array([s.sigma[1] for s in states], dtype=np.int64),
        )


@dataclass
class ContinuousRun:
    """Output of a continuous simulation; path and velocity are None when not recorded."""

    params: ContParams
    init: ContState
    horizon: float
    final_state: ContState
    path: Optional[PiecewiseLinearPath] = None
    velocity: Optional[VelocityPath] = None
    accumulator: Optional[object] = None
