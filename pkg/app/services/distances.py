"""
Distance Service

Wasserstein-1 between measures on [0, ell] x Sigma embedded in R^3 as
(x, s1, s2), solved exactly with the network simplex of POT, and total
variation between binned measures.
"""

from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
import ot
import structlog

from app.config import settings
from app.errors import DiscretizationMismatchError, DomainError, MassMismatchError
from app.models.lattice import StationaryVector
from app.models.measures import AtomicDensityMeasure, DiscretizedMeasure, PointMasses
from app.services.invariant_measures import discretize

logger = structlog.get_logger(__name__)

MeasureLike = Union[AtomicDensityMeasure, DiscretizedMeasure, PointMasses, StationaryVector]


def embedding_diameter(ell: float) -> float:
    """Diameter bound of [0, ell] x Sigma in the R^3 embedding."""
    return float(np.sqrt(4.0**2 + 4.0**2 + ell**2))


def discretized_point_masses(measure: DiscretizedMeasure) -> PointMasses:
    sigmas = np.array(measure.sigmas, dtype=float)
    m, bins = measure.bulk.shape
    atoms = np.vstack(
        [
            np.column_stack([np.zeros(m), sigmas]),
            np.column_stack([np.full(m, measure.ell), sigmas]),
        ]
    )
    positions = measure.bin_positions()
    bulk_points = np.column_stack(
        [positions.ravel(), np.repeat(sigmas[:, 0], bins), np.repeat(sigmas[:, 1], bins)]
    )
    weights = np.concatenate([measure.atoms0, measure.atomsL, measure.bulk.ravel()])
    return PointMasses(np.vstack([atoms, bulk_points]), weights)


def to_point_masses(measure: MeasureLike, bins: Optional[int] = None) -> PointMasses:
    if isinstance(measure, PointMasses):
        return measure
    if isinstance(measure, AtomicDensityMeasure):
        return discretized_point_masses(discretize(measure, bins or settings.w1_bins_per_sigma))
    if isinstance(measure, DiscretizedMeasure):
        return discretized_point_masses(measure)
    if isinstance(measure, StationaryVector):
        return measure.to_point_masses().coarsen(settings.w1_max_atoms_per_sigma)
    raise DomainError(f"cannot embed {type(measure).__name__} as point masses")


def w1_distance(mu: MeasureLike, nu: MeasureLike, bins: Optional[int] = None) -> float:
    """
    Exact W1 between the discretized supports, Euclidean ground cost on (x, s1, s2).
    Density parts are binned into `bins` mass-centroid atoms per velocity pair.
    """
    left = to_point_masses(mu, bins)
    right = to_point_masses(nu, bins)
    left_mass, right_mass = left.total_mass(), right.total_mass()
    if abs(left_mass - right_mass) > 1e-9:
        raise MassMismatchError(f"masses differ: {left_mass} vs {right_mass}")

    keep_left = left.weights > 0
    keep_right = right.weights > 0
    xs, a = left.points[keep_left], left.weights[keep_left]
    xt, b = right.points[keep_right], right.weights[keep_right]
    a = a / a.sum()
    b = b / b.sum()
    cost = ot.dist(xs, xt, metric="euclidean")
    logger.debug("w1 transport", sources=len(a), targets=len(b))
    value = ot.emd2(a, b, cost, numItermax=max(1_000_000, 50 * len(a) * len(b)))
    return float(value) * left_mass


def w1_refinement(mu: MeasureLike, nu: MeasureLike, m_list: Iterable[int]) -> List[Tuple[int, float]]:
    """W1 for several bin counts, to report sensitivity to the bulk discretization."""
    report = [(int(m), w1_distance(mu, nu, bins=int(m))) for m in m_list]
    logger.info("w1 refinement", report=report)
    return report


def tv_distance(mu: DiscretizedMeasure, nu: DiscretizedMeasure) -> float:
    """Half the L1 distance between atom and bin masses on a shared grid."""
    if not mu.same_grid(nu):
        raise DiscretizationMismatchError("measures are binned on different grids")
    return float(0.5 * np.abs(mu.vector() - nu.vector()).sum())
