"""
Lattice domain types for the discrete separation chain on {1..L} x Sigma.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from app.errors import ConfigurationError, DomainError
from app.models.measures import PointMasses
from app.models.velocity import TumbleKind, VelocityPair


class LatticeParams(BaseModel):
    """Lattice size, torus length, clock rate and velocity dynamics."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    L: int
    ell: float = 1.0
    kind: TumbleKind
    gamma: Optional[float] = None
    scaled: bool = True

    @model_validator(mode="after")
    def _check(self) -> "LatticeParams":
        if self.L < 2:
            raise ConfigurationError(f"L must be at least 2, got {self.L}")
        if not self.ell > 0:
            raise ConfigurationError(f"ell must be positive, got {self.ell}")
        if self.scaled:
            object.__setattr__(self, "gamma", (self.L - 1) / self.ell)
        elif self.gamma is None or self.gamma < 0:
            raise ConfigurationError(f"unscaled lattice needs gamma >= 0, got {self.gamma}")
        return self

    @property
    def n_sigmas(self) -> int:
        return len(self.kind.sigmas)

    @property
    def n_states(self) -> int:
        return self.L * self.n_sigmas

    def state_index(self, y: int, sigma) -> int:
        return (y - 1) * self.n_sigmas + self.kind.sigma_index(sigma)


@dataclass(frozen=True)
class LatticeState:
    y: int
    sigma: VelocityPair

    def check(self, L: int) -> "LatticeState":
        if not 1 <= self.y <= L:
            raise DomainError(f"site {self.y} outside 1..{L}")
        return self


@dataclass
class LatticeTrajectory:
    """
    Changes-only event list: state (y[k], s1[k], s2[k]) holds on
    [times[k], times[k+1]), the last one until the horizon.
    """

    times: np.ndarray
    y: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    horizon: float

    def site_at(self, t) -> np.ndarray:
        return self.y[np.searchsorted(self.times, t, side="right") - 1]

    def site_before(self, t) -> np.ndarray:
        """Left limit y(t-); equals y(0) at t = 0."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return self.y[np.maximum(idx, 0)]

    def state_at(self, t: float) -> LatticeState:
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return LatticeState(int(self.y[k]), VelocityPair(int(self.s1[k]), int(self.s2[k])))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "y": self.y, "s1": self.s1, "s2": self.s2})


@dataclass
class StationaryVector:
    """Stationary law of the lattice chain, probs[y-1, k] for sigma kind.sigmas[k]."""

    params: LatticeParams
    probs: np.ndarray
    residual: float
    method: str = "direct"

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    def prob(self, y: int, sigma) -> float:
        return float(self.probs[y - 1, self.params.kind.sigma_index(sigma)])

    def velocity_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def to_point_masses(self, ell: Optional[float] = None) -> PointMasses:
        """Push the law onto [0, ell] x Sigma through the affine site injection."""
        ell = self.params.ell if ell is None else ell
        L = self.params.L
        sigmas = np.array(self.params.kind.sigmas, dtype=float)
        x = ell * np.arange(L) / (L - 1)
        points = np.column_stack(
            [np.repeat(x, len(sigmas)), np.tile(sigmas[:, 0], L), np.tile(sigmas[:, 1], L)]
        )
        return PointMasses(points, self.flat)

    def to_frame(self) -> pd.DataFrame:
        sigmas = self.params.kind.sigmas
        L = self.params.L
        return pd.DataFrame(
            {
                "y": np.repeat(np.arange(1, L + 1), len(sigmas)),
                "s1": np.tile([s.s1 for s in sigmas], L),
                "s2": np.tile([s.s2 for s in sigmas], L),
                "prob": self.flat,
                "residual": self.residual,
            }
        )
