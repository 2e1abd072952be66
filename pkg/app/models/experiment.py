"""
Run configuration for the command-line front end.
"""

import itertools
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.errors import ConfigurationError
from app.models.velocity import TumbleKind

KINDS = ("citp", "cftp", "ditp", "dftp")
SEEDED_COMMANDS = ("simulate", "converge", "mixing", "hitting")


class ExperimentConfig(BaseModel):
    """
    Validated parameters of one CLI run. Rate and length fields are lists so
    that sweeps over their Cartesian product share one config.
    """

    command: Literal["simulate", "invariant", "converge", "mixing", "hitting", "verify"]
    kind: Literal["citp", "cftp", "ditp", "dftp"] = "citp"
    omega: List[float] = Field(default_factory=list)
    alpha: List[float] = Field(default_factory=list)
    beta: List[float] = Field(default_factory=list)
    ell: List[float] = Field(default_factory=lambda: [1.0])
    L: List[int] = Field(default_factory=list)
    horizon: Optional[float] = None
    T: float = 1.0
    replicas: Optional[int] = None
    seed: Optional[int] = None
    epsilon: float = 0.25
    bins: int = 50
    x0: float = 0.0
    s1: int = 1
    s2: int = 1
    compare_horizon: Optional[float] = None
    output: Optional[str] = None
    replica_table: Optional[str] = None
    workers: Optional[int] = None
    quick: bool = False

    @field_validator("omega", "alpha", "beta", "ell")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        if any(not v > 0 for v in values):
            raise ValueError(f"values must be positive, got {values}")
        return values

    @field_validator("L")
    @classmethod
    def _lattice_sizes(cls, values: List[int]) -> List[int]:
        if any(v < 2 for v in values):
            raise ValueError(f"lattice sizes must be at least 2, got {values}")
        return values

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.command in SEEDED_COMMANDS and self.seed is None:
            raise ConfigurationError(f"{self.command} needs --seed")
        if self.command == "invariant" and self.compare_horizon is not None and self.seed is None:
            raise ConfigurationError("--compare-horizon needs --seed")
        if self.command == "verify":
            return self
        if self.instantaneous and not self.omega:
            raise ConfigurationError(f"{self.kind} needs --omega")
        if not self.instantaneous and (not self.alpha or not self.beta):
            raise ConfigurationError(f"{self.kind} needs --alpha and --beta")
        alphabet = (1, -1) if self.instantaneous else (1, 0, -1)
        if self.s1 not in alphabet or self.s2 not in alphabet:
            raise ConfigurationError(f"initial velocities ({self.s1}, {self.s2}) not in {alphabet}")
        if self.lattice and self.command in ("simulate", "invariant") and not self.L:
            raise ConfigurationError(f"{self.kind} needs --L")
        if self.command == "converge" and not self.L:
            raise ConfigurationError("converge needs an --L list")
        if self.command == "simulate" and not (self.horizon and self.horizon > 0):
            raise ConfigurationError("simulate needs a positive --horizon")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        for name in ("replicas", "workers", "bins"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        return self

    @property
    def instantaneous(self) -> bool:
        return self.kind in ("citp", "ditp")

    @property
    def lattice(self) -> bool:
        return self.kind in ("ditp", "dftp")

    def tumble_kinds(self) -> List[TumbleKind]:
        if self.instantaneous:
            return [TumbleKind.instantaneous(w) for w in self.omega]
        return [TumbleKind.finite(a, b) for a, b in itertools.product(self.alpha, self.beta)]

    def grid(self):
        """(kind, ell) points of the sweep."""
        return list(itertools.product(self.tumble_kinds(), self.ell))


class CheckResult(BaseModel):
    """Outcome of one acceptance check."""

    name: str
    passed: bool
    metrics: Dict[str, Any] = Field(default_factory=dict)
    duration_s: float = 0.0
    error: Optional[str] = None
