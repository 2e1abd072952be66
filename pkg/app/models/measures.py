"""
Measure types on [0, ell] x Sigma: closed-form atom-plus-density measures,
binned measures and point-mass clouds in the R^3 embedding.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from app.errors import DomainError
from app.models.velocity import TumbleKind, VelocityPair


@dataclass(frozen=True)
class SpectralParams:
    """Constants of the finite-tumble invariant measure."""

    alpha: float
    beta: float
    ell: float
    kappa: float
    r: float
    r_tilde: float
    lambda_d: float
    lambda_a: float
    lambda_b: float


@dataclass
class AtomicDensityMeasure:
    """
    Per sigma: atoms d0 at 0 and dl at ell plus the density
    a + bs*sinh(kappa(x - ell/2)) + bc*cosh(kappa(x - ell/2)) on (0, ell).
    kappa = 0 means a constant density a + bc.
    """

    kind: TumbleKind
    ell: float
    kappa: float
    d0: np.ndarray
    dl: np.ndarray
    a: np.ndarray
    bs: np.ndarray
    bc: np.ndarray
    normalization: float = 1.0

    @property
    def sigmas(self) -> Tuple[VelocityPair, ...]:
        return self.kind.sigmas

    def _shifted(self, x):
        return self.kappa * (np.asarray(x, dtype=float) - 0.5 * self.ell)

    def density(self, x, k: int):
        """Bulk density of sheet k at x."""
        u = self._shifted(x)
        return self.a[k] + self.bs[k] * np.sinh(u) + self.bc[k] * np.cosh(u)

    def density_derivative(self, x, k: int):
        u = self._shifted(x)
        return self.kappa * (self.bs[k] * np.cosh(u) + self.bc[k] * np.sinh(u))

    def cumulative(self, x, k: int):
        """Bulk mass of sheet k on (0, x)."""
        x = np.asarray(x, dtype=float)
        if self.kappa == 0.0:
            return (self.a[k] + self.bc[k]) * x
        h = 0.5 * self.kappa * self.ell
        u = self._shifted(x)
        return (
            self.a[k] * x
            + self.bs[k] * (np.cosh(u) - np.cosh(h)) / self.kappa
            + self.bc[k] * (np.sinh(u) + np.sinh(h)) / self.kappa
        )

    def first_moment(self, x, k: int):
        """Integral of t * density(t) over (0, x)."""
        x = np.asarray(x, dtype=float)
        if self.kappa == 0.0:
            return 0.5 * (self.a[k] + self.bc[k]) * x * x
        kap = self.kappa
        u = self._shifted(x)
        h = 0.5 * kap * self.ell

        # t*sinh(v) integrates to t*cosh(v)/k - sinh(v)/k^2, t*cosh(v) to t*sinh(v)/k - cosh(v)/k^2
        def sinh_part(t, v):
            return t * np.cosh(v) / kap - np.sinh(v) / kap**2

        def cosh_part(t, v):
            return t * np.sinh(v) / kap - np.cosh(v) / kap**2

        return (
            0.5 * self.a[k] * x * x
            + self.bs[k] * (sinh_part(x, u) - sinh_part(0.0, -h))
            + self.bc[k] * (cosh_part(x, u) - cosh_part(0.0, -h))
        )

    def bulk_masses(self) -> np.ndarray:
        return np.array([float(self.cumulative(self.ell, k)) for k in range(len(self.sigmas))])

    def sigma_masses(self) -> np.ndarray:
        return self.d0 + self.dl + self.bulk_masses()

    def total_mass(self) -> float:
        return float(self.sigma_masses().sum())

    def atom_mass(self) -> Tuple[float, float]:
        return float(self.d0.sum()), float(self.dl.sum())

    def scaled(self, factor: float) -> "AtomicDensityMeasure":
        return replace(
            self,
            d0=self.d0 * factor,
            dl=self.dl * factor,
            a=self.a * factor,
            bs=self.bs * factor,
            bc=self.bc * factor,
        )

    def row(self, sigma) -> Dict[str, float]:
        k = self.kind.sigma_index(sigma)
        return {
            "d0": float(self.d0[k]),
            "dl": float(self.dl[k]),
            "a": float(self.a[k]),
            "bs": float(self.bs[k]),
            "bc": float(self.bc[k]),
        }

    def coefficients(self) -> np.ndarray:
        """(|Sigma|, 5) array of d0, dl, a, bs, bc."""
        return np.column_stack([self.d0, self.dl, self.a, self.bs, self.bc])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.label,
            "params": self.kind.params(),
            "rows": [{"s1": s.s1, "s2": s.s2, **self.row(s)} for s in self.sigmas],
            "kappa": self.kappa,
            "ell": self.ell,
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AtomicDensityMeasure":
        params = data["params"]
        if data["kind"] == "itp":
            kind = TumbleKind.instantaneous(params["omega"])
        else:
            kind = TumbleKind.finite(params["alpha"], params["beta"])
        rows = {(row["s1"], row["s2"]): row for row in data["rows"]}
        ordered = [rows[tuple(s)] for s in kind.sigmas]
        return cls(
            kind=kind,
            ell=float(data["ell"]),
            kappa=float(data["kappa"]),
            d0=np.array([row["d0"] for row in ordered]),
            dl=np.array([row["dl"] for row in ordered]),
            a=np.array([row["a"] for row in ordered]),
            bs=np.array([row["bs"] for row in ordered]),
            bc=np.array([row["bc"] for row in ordered]),
            normalization=float(data.get("normalization", 1.0)),
        )


@dataclass
class DiscretizedMeasure:
    """
    Atoms at 0 and ell per sigma plus per-sigma bin masses on a shared grid.

    centroids[k, j] is the mass centroid of bin j on sheet k; bins without
    known centroids use their midpoints.
    """

    ell: float
    sigmas: Tuple[VelocityPair, ...]
    edges: np.ndarray
    atoms0: np.ndarray
    atomsL: np.ndarray
    bulk: np.ndarray
    centroids: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def bins(self) -> int:
        return len(self.edges) - 1

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def bin_positions(self) -> np.ndarray:
        if self.centroids is not None:
            return self.centroids
        return np.broadcast_to(self.midpoints(), self.bulk.shape)

    def total_mass(self) -> float:
        return float(self.atoms0.sum() + self.atomsL.sum() + self.bulk.sum())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.atoms0, self.atomsL, self.bulk.ravel()])

    def same_grid(self, other: "DiscretizedMeasure") -> bool:
        return (
            tuple(self.sigmas) == tuple(other.sigmas)
            and self.ell == other.ell
            and np.array_equal(self.edges, other.edges)
        )

    def jammed_fraction(self) -> Tuple[float, float]:
        return float(self.atoms0.sum()), float(self.atomsL.sum())

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for k, s in enumerate(self.sigmas):
            rows.append((0.0, 0.0, "0", s.s1, s.s2, float(self.atoms0[k])))
            rows.append((self.ell, self.ell, "ell", s.s1, s.s2, float(self.atomsL[k])))
            for j in range(self.bins):
                rows.append((self.edges[j], self.edges[j + 1], "", s.s1, s.s2, float(self.bulk[k, j])))
        return pd.DataFrame(rows, columns=["bin_lo", "bin_hi", "atom", "s1", "s2", "mass"])


@dataclass
class PointMasses:
    """Weighted points (x, s1, s2) in R^3."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise DomainError("points and weights differ in length")

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.weights)

    def concat(self, other: "PointMasses") -> "PointMasses":
        return PointMasses(np.vstack([self.points, other.points]), np.concatenate([self.weights, other.weights]))

    def coarsen(self, max_per_sigma: int) -> "PointMasses":
        """
        Merge points sharing a velocity pair into at most max_per_sigma
        mass-weighted centroids of x-contiguous groups. Zero-mass points are dropped.
        """
        if max_per_sigma < 1:
            raise DomainError(f"max_per_sigma must be positive, got {max_per_sigma}")
        keep = self.weights > 0
        points, weights = self.points[keep], self.weights[keep]
        sigma_keys = np.unique(points[:, 1:], axis=0)
        out_points, out_weights = [], []
        for key in sigma_keys:
            on_sheet = np.all(points[:, 1:] == key, axis=1)
            sheet_points, sheet_weights = points[on_sheet], weights[on_sheet]
            if len(sheet_weights) <= max_per_sigma:
                out_points.append(sheet_points)
                out_weights.append(sheet_weights)
                continue
            order = np.argsort(sheet_points[:, 0], kind="stable")
            x, w = sheet_points[order, 0], sheet_weights[order]
            groups = np.array_split(np.arange(len(x)), max_per_sigma)
            starts = np.array([g[0] for g in groups])
            mass = np.add.reduceat(w, starts)
            moment = np.add.reduceat(w * x, starts)
            centroid = np.column_stack([moment / mass, np.tile(key, (len(starts), 1))])
            out_points.append(centroid)
            out_weights.append(mass)
        return PointMasses(np.vstack(out_points), np.concatenate(out_weights))
