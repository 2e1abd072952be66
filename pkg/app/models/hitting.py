"""
Hitting-time queries and result types.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.errors import DomainError
from app.models.velocity import TumbleKind, VelocityPair

JAM_AT_ZERO = "jam_at_0"
VELOCITY_AGREEMENT = "velocity_agreement"
DIAGONAL_RETURN = "diagonal_return"
TARGETS = (JAM_AT_ZERO, VELOCITY_AGREEMENT, DIAGONAL_RETURN)


@dataclass(frozen=True)
class HittingQuery:
    """
    A start state and a target.

    jam_at_0: separation process from (x, sigma) until it sits at 0 with
        velocity target_sigma (default (1, -1)); needs ell.
    velocity_agreement: one particle of each of two independent copies, started
        at sigma = (s0, s0_tilde), until their velocities agree.
    diagonal_return: velocity pair from sigma until it enters the diagonal
        {s1 == s2}; a start on the diagonal waits for the first return.
    """

    target: str
    kind: TumbleKind
    sigma: VelocityPair
    x: float = 0.0
    ell: Optional[float] = None
    target_sigma: VelocityPair = VelocityPair(1, -1)

    def __post_init__(self):
        if self.target not in TARGETS:
            raise DomainError(f"unknown target {self.target!r}, expected one of {TARGETS}")
        object.__setattr__(self, "sigma", self.kind.validate_pair(self.sigma))
        if self.target == JAM_AT_ZERO:
            if self.ell is None or not self.ell > 0:
                raise DomainError("jam_at_0 queries need a positive ell")
            if not 0.0 <= self.x <= self.ell:
                raise DomainError(f"x={self.x} outside [0, {self.ell}]")
            object.__setattr__(self, "target_sigma", self.kind.validate_pair(self.target_sigma))

    def describe(self) -> str:
        s1, s2 = self.sigma
        if self.target == JAM_AT_ZERO:
            t1, t2 = self.target_sigma
            return f"{self.kind.label} {JAM_AT_ZERO}({t1},{t2}) from x={self.x:g} ({s1},{s2}) ell={self.ell:g}"
        return f"{self.kind.label} {self.target} from ({s1},{s2})"

    @property
    def satisfied_at_start(self) -> bool:
        s1, s2 = self.sigma
        if self.target == JAM_AT_ZERO:
            return self.x == 0.0 and self.sigma == self.target_sigma
        if self.target == VELOCITY_AGREEMENT:
            return s1 == s2
        return False


class HittingEstimate(BaseModel):
    mean: float
    stderr: float
    replicas: int


class OracleRow(BaseModel):
    """Closed form against its Monte Carlo estimate."""

    query: str
    closed_form: float
    mc_mean: float
    mc_stderr: float
    z_score: float

    @property
    def agrees(self) -> bool:
        return abs(self.z_score) <= 3.0


@dataclass
class DiagonalReturnSolve:
    """
    Absorbing-chain solution for the velocity pair returning to the diagonal.

    Rows of mean_return and hit_matrix follow kind.sigmas. For a start on the
    diagonal the quantities refer to the first return after leaving it.
    hit_matrix columns follow the diagonal states (1,1), (0,0), (-1,-1).
    """

    kind: TumbleKind
    mean_return: np.ndarray
    hit_matrix: np.ndarray
    diagonal: Tuple[VelocityPair, ...]
    embedded_law: np.ndarray
    step_mean: float

    def hit_distribution(self, start: VelocityPair) -> Dict[VelocityPair, float]:
        row = self.hit_matrix[self.kind.sigma_index(start)]
        return {sigma: float(p) for sigma, p in zip(self.diagonal, row)}


@dataclass
class DiagonalReturnStats:
    """Closed-form return times by start class and the derived hit law on the diagonal."""

    alpha: float
    beta: float
    mean_return: Dict[str, float]
    hit_distribution: Dict[VelocityPair, float]
    quoted_hit_distribution: Dict[VelocityPair, float]
    step_mean: float

    @property
    def quoted_total(self) -> float:
        return float(sum(self.quoted_hit_distribution.values()))


@dataclass
class ExcursionSample:
    """
    Consecutive excursions between visits of the velocity pair to the diagonal.

    increments[i] is the integral of s2 - s1 over excursion i, durations[i] its
    length; starts and hits are indices into the diagonal states (1,1), (0,0), (-1,-1).
    Excursions are stored chain after chain, consecutive within a chain.
    """

    increments: np.ndarray
    durations: np.ndarray
    starts: np.ndarray
    hits: np.ndarray
    chains: int

    def __len__(self) -> int:
        return len(self.increments)

    def moment(self, k: int) -> Tuple[float, float]:
        values = self.increments**k
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values)))


@dataclass
class ZeroExcursionCheck:
    statistic: float
    pvalue: float
    samples: int
    second_moment: float
    second_moment_stderr: float
    positive_fraction: float

    @property
    def critical_value(self) -> float:
        return 1.36 / np.sqrt(self.samples)

    @property
    def passed(self) -> bool:
        return self.statistic <= self.critical_value


def oracle_frame(rows: List[OracleRow]):
    return pd.DataFrame([row.model_dump() for row in rows], columns=list(OracleRow.model_fields))
