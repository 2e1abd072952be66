"""
Coupling and mixing result types.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from app.models.lattice import LatticeTrajectory
from app.models.pdmp import PiecewiseLinearPath
from app.models.velocity import VelocityPath

DISCRETE_CONTINUOUS = "discrete_continuous"
DISCRETE_DISCRETE = "discrete_discrete"
CONTINUOUS_CONTINUOUS = "continuous_continuous"

Member = Union[LatticeTrajectory, PiecewiseLinearPath]


class CouplingTimes(NamedTuple):
    tau1: float
    tau2: float
    tau_sigma: float
    tau_coupling: float


@dataclass
class CoupledPair:
    """
    Two coupled copies sharing velocity randomness (and Poisson rings for
    lattice members). velocity_b equals velocity_a from tau_i on in coordinate i.
    Unobserved times are inf.
    """

    variant: str
    horizon: float
    ell: float
    velocity_a: VelocityPath
    velocity_b: VelocityPath
    member_a: Member
    member_b: Member
    rings: Optional[Tuple[np.ndarray, np.ndarray]] = None
    L: Optional[int] = None
    tau1: float = np.inf
    tau2: float = np.inf
    tau_coupling: float = np.inf

    @property
    def tau_sigma(self) -> float:
        return max(self.tau1, self.tau2)

    @property
    def times(self) -> CouplingTimes:
        return CouplingTimes(self.tau1, self.tau2, self.tau_sigma, self.tau_coupling)


class QuantileEstimate(BaseModel):
    """Order-statistic quantile of coupling times with binomial confidence bounds."""

    level: float
    time: float
    time_low: float
    time_high: float
    exceed_fraction: float
    exceed_low: float
    exceed_high: float
    replicas: int


class TailFit(BaseModel):
    slope: float
    intercept: float
    slope_low: float
    slope_high: float
    points: int


class PairEstimate(BaseModel):
    init_a: Dict[str, Any]
    init_b: Dict[str, Any]
    pilot_quantile: float
    quantile: Optional[QuantileEstimate] = None


class MixingEstimate(BaseModel):
    """Coupling-based and TV-based mixing-time estimates for one parameter point."""

    kind: Dict[str, Any]
    ell: float
    epsilon: float
    seed: int
    replicas: int
    scale: float
    lower_bound: float
    t_mix_coupling: float
    t_mix_coupling_low: float
    t_mix_coupling_high: float
    worst_pairs: List[PairEstimate] = Field(default_factory=list)
    time_grid: List[float] = Field(default_factory=list)
    tv_by_bins: Dict[str, List[float]] = Field(default_factory=dict)
    t_mix_tv: Optional[float] = None
    tail: Optional[TailFit] = None
