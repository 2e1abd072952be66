# Domain types for velocities, separations, measures and results
from .velocity import FINITE, INSTANTANEOUS, ParticlePath, TumbleKind, VelocityPair, VelocityPath
from .measures import AtomicDensityMeasure, DiscretizedMeasure, PointMasses, SpectralParams
from .lattice import LatticeParams, LatticeState, LatticeTrajectory, StationaryVector
from .pdmp import ContinuousRun, ContParams, ContState, PiecewiseLinearPath, StateBatch, StateClass
from .coupling import CoupledPair, CouplingTimes, MixingEstimate, QuantileEstimate
from .hitting import HittingEstimate, HittingQuery, OracleRow
from .experiment import CheckResult, ExperimentConfig

__all__ = [
    "FINITE",
    "INSTANTANEOUS",
    "ParticlePath",
    "TumbleKind",
    "VelocityPair",
    "VelocityPath",
    "AtomicDensityMeasure",
    "DiscretizedMeasure",
    "PointMasses",
    "SpectralParams",
    "LatticeParams",
    "LatticeState",
    "LatticeTrajectory",
    "StationaryVector",
    "ContinuousRun",
    "ContParams",
    "ContState",
    "PiecewiseLinearPath",
    "StateBatch",
    "StateClass",
    "CoupledPair",
    "CouplingTimes",
    "MixingEstimate",
    "QuantileEstimate",
    "HittingEstimate",
    "HittingQuery",
    "OracleRow",
    "CheckResult",
    "ExperimentConfig",
]
