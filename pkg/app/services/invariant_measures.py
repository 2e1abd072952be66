"""
Invariant Measures Service

Closed-form invariant laws of the continuous separation process, their
coordinate symmetries, the generator-based stationarity residual with spline
test functions, exact binning and inverse-CDF sampling.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import roots_legendre

from app.errors import AdmissibilityError, DomainError, NormalizationError
from app.models.measures import AtomicDensityMeasure, DiscretizedMeasure, SpectralParams
from app.models.pdmp import StateBatch
from app.models.velocity import TumbleKind, VelocityPair
from app.services.velocity_process import pair_generator

logger = structlog.get_logger(__name__)

SYMMETRIES = ("rho1", "rho2", "rho3")


def spectral_params(alpha: float, beta: float, ell: float) -> SpectralParams:
    if min(alpha, beta, ell) <= 0:
        raise DomainError("alpha, beta and ell must be positive")
    kappa = np.sqrt((alpha + beta) * (2.0 * alpha + beta) / 2.0)
    r = alpha / beta
    r_tilde = kappa / beta
    half = 0.5 * kappa * ell
    th = np.tanh(half)
    lambda_d = (1.0 - r_tilde / (2.0 * r_tilde + (2.0 * r + 1.0) * th)) / r
    lambda_a = kappa / (4.0 * r_tilde) * (1.0 - 1.0 / (2.0 * r + 2.0 + 2.0 * r_tilde * th))
    lambda_b = kappa / (4.0 * (r + 1.0) * np.cosh(half) * (2.0 * r_tilde + (2.0 * r + 1.0) * th))
    return SpectralParams(
        alpha=float(alpha),
        beta=float(beta),
        ell=float(ell),
        kappa=float(kappa),
        r=float(r),
        r_tilde=float(r_tilde),
        lambda_d=float(lambda_d),
        lambda_a=float(lambda_a),
        lambda_b=float(lambda_b),
    )


def citp_invariant(omega: float, ell: float) -> AtomicDensityMeasure:
    """Normalized invariant law for instantaneous tumbles; constant bulk density."""
    if omega <= 0 or ell <= 0:
        raise DomainError("omega and ell must be positive")
    kind = TumbleKind.instantaneous(omega)
    c = 1.0 / (4.0 * (2.0 + omega * ell))
    # rows in kind.sigmas order: (1,1), (1,-1), (-1,1), (-1,-1)
    d0 = np.array([c, 2.0 * c, 0.0, c])
    dl = np.array([c, 0.0, 2.0 * c, c])
    a = np.full(4, omega * c)
    zeros = np.zeros(4)
    return AtomicDensityMeasure(kind=kind, ell=float(ell), kappa=0.0, d0=d0, dl=dl, a=a,
                                bs=zeros.copy(), bc=zeros.copy(), normalization=1.0)


def cftp_table(alpha: float, beta: float, ell: float) -> AtomicDensityMeasure:
    """Unnormalized finite-tumble invariant measure scaled so that d0 at (1, 0) is 1."""
    sp = spectral_params(alpha, beta, ell)
    r, rt, la, lb, ld = sp.r, sp.r_tilde, sp.lambda_a, sp.lambda_b, sp.lambda_d
    # rows in kind.sigmas order: (1,1) (1,0) (1,-1) (0,1) (0,0) (0,-1) (-1,1) (-1,0) (-1,-1)
    table = np.array(
        [
            # d0, dl, a, bc, bs
            [1 / (4 * r), 1 / (4 * r), la, (2 * r + 1) / r * lb, 0.0],
            [1.0, 0.0, 2 * r * la, (4 * r + 2) * lb, 2 * rt * lb],
            [ld, 0.0, la, -(2 * r + 1) * lb, -2 * rt * lb],
            [0.0, 1.0, 2 * r * la, (4 * r + 2) * lb, -2 * rt * lb],
            [r, r, 4 * r * r * la, 4 * r * (2 * r + 1) * lb, 0.0],
            [1.0, 0.0, 2 * r * la, (4 * r + 2) * lb, 2 * rt * lb],
            [0.0, ld, la, -(2 * r + 1) * lb, 2 * rt * lb],
            [0.0, 1.0, 2 * r * la, (4 * r + 2) * lb, -2 * rt * lb],
            [1 / (4 * r), 1 / (4 * r), la, (2 * r + 1) / r * lb, 0.0],
        ]
    )
    return AtomicDensityMeasure(
        kind=TumbleKind.finite(alpha, beta),
        ell=float(ell),
        kappa=sp.kappa,
        d0=table[:, 0],
        dl=table[:, 1],
        a=table[:, 2],
        bc=table[:, 3],
        bs=table[:, 4],
        normalization=1.0,
    )


def closed_form_mass(measure: AtomicDensityMeasure) -> float:
    """Total mass using the integral of cosh over (0, ell); the sinh part integrates to zero."""
    ell, kappa = measure.ell, measure.kappa
    cosh_integral = ell if kappa == 0.0 else 2.0 * np.sinh(0.5 * kappa * ell) / kappa
    return float(np.sum(measure.d0 + measure.dl + measure.a * ell + measure.bc * cosh_integral))


def quadrature_mass(measure: AtomicDensityMeasure) -> float:
    bulk = sum(quad(lambda x: float(measure.density(x, k)), 0.0, measure.ell, epsabs=1e-14, epsrel=1e-13)[0]
               for k in range(len(measure.sigmas)))
    return float(measure.d0.sum() + measure.dl.sum() + bulk)


def cftp_invariant(alpha: float, beta: float, ell: float) -> Tuple[AtomicDensityMeasure, float]:
    """Normalized finite-tumble invariant law and the normalization constant of the table."""
    table = cftp_table(alpha, beta, ell)
    z = closed_form_mass(table)
    measure = table.scaled(1.0 / z)
    measure.normalization = z
    return measure, z


def invariant_measure(kind: TumbleKind, ell: float) -> AtomicDensityMeasure:
    if kind.is_instantaneous:
        return citp_invariant(kind.omega, ell)
    return cftp_invariant(kind.alpha, kind.beta, ell)[0]


def min_density(measure: AtomicDensityMeasure, grid: int = 1000) -> float:
    xs = np.linspace(0.0, measure.ell, grid + 2)[1:-1]
    return float(min(np.min(measure.density(xs, k)) for k in range(len(measure.sigmas))))


def symmetry_pushforward(measure: AtomicDensityMeasure, which: str) -> AtomicDensityMeasure:
    """
    Push the measure through one of the coordinate symmetries:
    rho1 (x, s1, s2) -> (ell - x, s2, s1), rho2 -> (ell - x, -s1, -s2),
    rho3 -> (x, -s2, -s1).
    """
    if which not in SYMMETRIES:
        raise DomainError(f"unknown symmetry {which}, expected one of {SYMMETRIES}")
    kind = measure.kind
    mapping = {
        "rho1": (lambda s: (s[1], s[0]), True),
        "rho2": (lambda s: (-s[0], -s[1]), True),
        "rho3": (lambda s: (-s[1], -s[0]), False),
    }
    relabel, reflect = mapping[which]
    m = len(kind.sigmas)
    target = np.array([kind.sigma_index(relabel(s)) for s in kind.sigmas])
    d0, dl, a, bs, bc = (np.empty(m) for _ in range(5))
    if reflect:
        d0[target], dl[target], bs[target] = measure.dl, measure.d0, -measure.bs
    else:
        d0[target], dl[target], bs[target] = measure.d0, measure.dl, measure.bs
    a[target], bc[target] = measure.a, measure.bc
    return AtomicDensityMeasure(kind=kind, ell=measure.ell, kappa=measure.kappa, d0=d0, dl=dl,
                                a=a, bs=bs, bc=bc, normalization=measure.normalization)


def discretize(measure: AtomicDensityMeasure, bins: int) -> DiscretizedMeasure:
    """Exact bin masses and mass centroids from the closed-form antiderivatives."""
    if bins < 1:
        raise DomainError(f"bins must be at least 1, got {bins}")
    edges = np.linspace(0.0, measure.ell, bins + 1)
    m = len(measure.sigmas)
    bulk = np.empty((m, bins))
    centroids = np.empty((m, bins))
    midpoints = 0.5 * (edges[:-1] + edges[1:])
    for k in range(m):
        mass = np.diff(measure.cumulative(edges, k))
        moment = np.diff(measure.first_moment(edges, k))
        bulk[k] = mass
        with np.errstate(invalid="ignore", divide="ignore"):
            centroid = np.where(mass > 0, moment / np.where(mass > 0, mass, 1.0), midpoints)
        centroids[k] = np.clip(centroid, edges[:-1], edges[1:])
    return DiscretizedMeasure(
        ell=measure.ell,
        sigmas=measure.sigmas,
        edges=edges,
        atoms0=measure.d0.copy(),
        atomsL=measure.dl.copy(),
        bulk=bulk,
        centroids=centroids,
    )


def sample_invariant(measure: AtomicDensityMeasure, n: int, rng: np.random.Generator) -> StateBatch:
    """Draw n states: category by mass, bulk positions by bisection on the antiderivative."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    total = measure.total_mass()
    if abs(total - 1.0) > 1e-9:
        raise NormalizationError(f"measure has total mass {total}, expected 1")
    m = len(measure.sigmas)
    s1_of = np.array([s.s1 for s in measure.sigmas])
    s2_of = np.array([s.s2 for s in measure.sigmas])
    if n == 0:
        return StateBatch(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    bulk = np.clip(measure.bulk_masses(), 0.0, None)
    weights = np.concatenate([np.clip(measure.d0, 0, None), np.clip(measure.dl, 0, None), bulk])
    category = rng.choice(3 * m, size=n, p=weights / weights.sum())
    k = category % m
    x = np.where(category < m, 0.0, measure.ell)

    in_bulk = np.flatnonzero(category >= 2 * m)
    u = rng.random(len(in_bulk))
    for sheet in np.unique(k[in_bulk]):
        rows = in_bulk[k[in_bulk] == sheet]
        target = u[k[in_bulk] == sheet] * bulk[sheet]
        lo = np.zeros(len(rows))
        hi = np.full(len(rows), measure.ell)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = measure.cumulative(mid, sheet) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x[rows] = np.clip(0.5 * (lo + hi), np.nextafter(0.0, 1.0), np.nextafter(measure.ell, 0.0))
    return StateBatch(x, s1_of[k].astype(np.int64), s2_of[k].astype(np.int64))


@dataclass
class AdmissibleFunction:
    """
    Test function on [0, ell] x Sigma: one cubic spline per sheet plus the
    values at the jam states at 0 and ell. Sheets that flow into a boundary
    must match the jam value there; resting sheets keep free jam values.
    """

    kind: TumbleKind
    ell: float
    splines: List[CubicSpline]
    at0: np.ndarray
    atL: np.ndarray

    @classmethod
    def constant(cls, kind: TumbleKind, ell: float, value: float = 1.0) -> "AdmissibleFunction":
        knots = np.array([0.0, 0.5 * ell, ell])
        m = len(kind.sigmas)
        splines = [CubicSpline(knots, np.full(3, value)) for _ in range(m)]
        return cls(kind, ell, splines, np.full(m, value), np.full(m, value))

    def values(self, x, k: int):
        return self.splines[k](x)

    def derivative(self, x, k: int):
        return self.splines[k](x, 1)

    def sup_norm(self, grid: int = 200) -> float:
        xs = np.linspace(0.0, self.ell, grid)
        sheet_max = max(np.max(np.abs(s(xs))) for s in self.splines)
        return float(max(sheet_max, np.max(np.abs(self.at0)), np.max(np.abs(self.atL))))

    def check(self, tol: float = 1e-12) -> "AdmissibleFunction":
        scale = max(1.0, self.sup_norm())
        for k, sigma in enumerate(self.kind.sigmas):
            slope = sigma.relative_speed
            if slope < 0 and abs(self.at0[k] - self.values(0.0, k)) > tol * scale:
                raise AdmissibilityError(f"value at 0 does not match the jam state for {tuple(sigma)}")
            if slope > 0 and abs(self.atL[k] - self.values(self.ell, k)) > tol * scale:
                raise AdmissibilityError(f"value at ell does not match the jam state for {tuple(sigma)}")
        return self


def random_admissible_functions(
    kind: TumbleKind,
    ell: float,
    n: int,
    rng: np.random.Generator,
    knots: int = 8,
) -> List[AdmissibleFunction]:
    """Random spline test functions satisfying the boundary matching."""
    grid = np.linspace(0.0, ell, knots)
    m = len(kind.sigmas)
    family = []
    for _ in range(n):
        splines = [CubicSpline(grid, rng.normal(size=knots)) for _ in range(m)]
        at0 = rng.normal(size=m)
        atL = rng.normal(size=m)
        for k, sigma in enumerate(kind.sigmas):
            if sigma.relative_speed < 0:
                at0[k] = splines[k](0.0)
            elif sigma.relative_speed > 0:
                atL[k] = splines[k](ell)
        family.append(AdmissibleFunction(kind, ell, splines, at0, atL))
    return family


def _quadrature_nodes(ell: float, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    ref_nodes, ref_weights = roots_legendre(order)
    edges = np.linspace(0.0, ell, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return nodes, weights


def generator_integral(
    measure: AtomicDensityMeasure,
    f: AdmissibleFunction,
    panels: int = 1250,
    order: int = 8,
) -> float:
    """Integral of the generator applied to f against the measure."""
    kind = measure.kind
    q = pair_generator(kind)
    m = len(kind.sigmas)
    slopes = np.array([s.relative_speed for s in kind.sigmas])
    ell = measure.ell

    # value seen when jumping into sheet j at a boundary
    at_zero = np.array([f.at0[j] if slopes[j] <= 0 else f.values(0.0, j) for j in range(m)])
    at_ell = np.array([f.atL[j] if slopes[j] >= 0 else f.values(ell, j) for j in range(m)])
    atoms = float(measure.d0 @ (q @ at_zero) + measure.dl @ (q @ at_ell))

    nodes, weights = _quadrature_nodes(ell, panels, order)
    values = np.array([f.values(nodes, j) for j in range(m)])
    bulk = 0.0
    for k in range(m):
        generator_f = slopes[k] * f.derivative(nodes, k) + q[k] @ values
        bulk += float(np.dot(weights, measure.density(nodes, k) * generator_f))
    return atoms + bulk


def stationarity_residual(
    measure: AtomicDensityMeasure,
    kind: Optional[TumbleKind],
    ell: Optional[float],
    family: Sequence[AdmissibleFunction],
) -> float:
    """
    max over the family of |integral of Lf dpi|, relative to sup|f| times the
    largest rate. Raises AdmissibilityError for test functions outside the domain.
    """
    if kind is not None and kind != measure.kind:
        raise DomainError("measure and kind disagree")
    if ell is not None and ell != measure.ell:
        raise DomainError("measure and ell disagree")
    max_rate = float(np.max(np.abs(np.diag(pair_generator(measure.kind)))))
    scale = max(max_rate, 2.0 / measure.ell)
    worst = 0.0
    for f in family:
        f.check()
        value = generator_integral(measure, f)
        worst = max(worst, abs(value) / (max(f.sup_norm(), 1e-300) * scale))
    logger.debug("stationarity residual", kind=measure.kind.label, functions=len(family), residual=worst)
    return worst


def ode_residual_bulk(measure: AtomicDensityMeasure, alpha: Optional[float] = None,
                      beta: Optional[float] = None, grid: int = 1000) -> float:
    """max over a grid of |-V F' + Q^T F| relative to max|F| times the largest rate."""
    kind = measure.kind if alpha is None else TumbleKind.finite(alpha, beta)
    q = pair_generator(kind)
    slopes = np.array([s.relative_speed for s in kind.sigmas], dtype=float)
    xs = np.linspace(0.0, measure.ell, grid)
    m = len(kind.sigmas)
    F = np.array([measure.density(xs, k) for k in range(m)])
    dF = np.array([measure.density_derivative(xs, k) for k in range(m)])
    residual = -slopes[:, None] * dF + q.T @ F
    scale = float(np.max(np.abs(F))) * float(np.max(np.abs(np.diag(q))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(residual)) / scale)


def measures_equal(left: AtomicDensityMeasure, right: AtomicDensityMeasure, tol: float = 1e-14) -> bool:
    scale = max(1.0, float(np.max(np.abs(left.coefficients()))))
    return bool(np.max(np.abs(left.coefficients() - right.coefficients())) <= tol * scale)


def atom_states(measure: AtomicDensityMeasure) -> List[Tuple[float, VelocityPair, float]]:
    """(x, sigma, mass) for the nonzero atoms."""
    out = []
    for k, sigma in enumerate(measure.sigmas):
        if measure.d0[k] > 0:
            out.append((0.0, sigma, float(measure.d0[k])))
        if measure.dl[k] > 0:
            out.append((measure.ell, sigma, float(measure.dl[k])))
    return out
