"""
Tests for the closed-form invariant measures, their symmetries, the
generator-based stationarity check, binning, sampling and distances.
"""

import numpy as np
import pytest

from app.errors import AdmissibilityError, DiscretizationMismatchError, MassMismatchError, NormalizationError
from app.models.measures import AtomicDensityMeasure, PointMasses
from app.models.velocity import TumbleKind
from app.services.distances import embedding_diameter, tv_distance, w1_distance, w1_refinement
from app.services.invariant_measures import (
    SYMMETRIES,
    AdmissibleFunction,
    citp_invariant,
    closed_form_mass,
    cftp_invariant,
    cftp_table,
    discretize,
    invariant_measure,
    measures_equal,
    min_density,
    ode_residual_bulk,
    quadrature_mass,
    random_admissible_functions,
    sample_invariant,
    spectral_params,
    stationarity_residual,
    symmetry_pushforward,
)

POINTS = [
    TumbleKind.instantaneous(0.1),
    TumbleKind.instantaneous(2.0),
    TumbleKind.finite(0.3, 2.0),
    TumbleKind.finite(1.0, 1.0),
    TumbleKind.finite(5.0, 0.5),
]


def test_citp_law_by_hand():
    measure = citp_invariant(1.0, 1.0)
    c = 1.0 / 12.0
    assert measure.total_mass() == pytest.approx(1.0)
    assert measure.row((1, -1)) == pytest.approx({"d0": 2 * c, "dl": 0.0, "a": c, "bs": 0.0, "bc": 0.0})
    assert sum(measure.atom_mass()) == pytest.approx(2.0 / 3.0)


@pytest.mark.parametrize("ell", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("kind", POINTS)
def test_invariant_law_is_normalized(kind, ell):
    measure = invariant_measure(kind, ell)
    assert measure.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert quadrature_mass(measure) == pytest.approx(1.0, abs=1e-9)
    assert min_density(measure) > 0
    assert np.all(measure.d0 >= 0) and np.all(measure.dl >= 0)


def test_cftp_table_normalization_constant():
    table = cftp_table(0.7, 1.3, 2.0)
    measure, z = cftp_invariant(0.7, 1.3, 2.0)
    assert closed_form_mass(table) == pytest.approx(z)
    assert quadrature_mass(table) == pytest.approx(z, rel=1e-10)
    assert measure.normalization == z
    assert table.row((1, 0))["d0"] == 1.0


def test_spectral_constants():
    sp = spectral_params(1.0, 1.0, 1.0)
    assert sp.kappa == pytest.approx(np.sqrt(3.0))
    assert sp.r == 1.0


@pytest.mark.parametrize("which", SYMMETRIES)
@pytest.mark.parametrize("kind", POINTS)
def test_symmetries_fix_the_law(kind, which):
    measure = invariant_measure(kind, 1.7)
    assert measures_equal(symmetry_pushforward(measure, which), measure, tol=1e-12)


@pytest.mark.parametrize("kind", POINTS)
def test_stationarity_residual(kind):
    rng = np.random.default_rng(0)
    measure = invariant_measure(kind, 1.0)
    family = random_admissible_functions(kind, 1.0, 10, rng)
    assert stationarity_residual(measure, kind, 1.0, family) < 1e-8
    assert stationarity_residual(measure, kind, 1.0, [AdmissibleFunction.constant(kind, 1.0)]) < 1e-12


def test_stationarity_residual_detects_a_wrong_measure(ftp):
    measure = invariant_measure(ftp, 1.0)
    k = ftp.sigma_index((1, -1))
    d0 = measure.d0.copy()
    d0[k] *= 1.5
    wrong = AtomicDensityMeasure(ftp, measure.ell, measure.kappa, d0, measure.dl, measure.a,
                                 measure.bs, measure.bc)
    family = random_admissible_functions(ftp, 1.0, 10, np.random.default_rng(1))
    assert stationarity_residual(wrong, ftp, 1.0, family) > 1e-6


def test_inadmissible_function_is_rejected(itp):
    f = random_admissible_functions(itp, 1.0, 1, np.random.default_rng(2))[0]
    k = itp.sigma_index((1, -1))
    f.at0[k] += 1.0
    with pytest.raises(AdmissibilityError):
        stationarity_residual(invariant_measure(itp, 1.0), itp, 1.0, [f])


@pytest.mark.parametrize("kind", POINTS[2:])
def test_bulk_density_solves_the_ode(kind):
    assert ode_residual_bulk(invariant_measure(kind, 3.0)) < 1e-10


def test_discretization_keeps_mass_and_centroids(ftp):
    measure = invariant_measure(ftp, 2.0)
    binned = discretize(measure, 25)
    assert binned.total_mass() == pytest.approx(1.0, abs=1e-12)
    positions = binned.bin_positions()
    assert np.all(positions >= binned.edges[:-1]) and np.all(positions <= binned.edges[1:])


def test_sampling_reproduces_atom_masses(ftp, rng):
    measure = invariant_measure(ftp, 1.0)
    batch = sample_invariant(measure, 40000, rng)
    assert len(batch) == 40000
    at0 = np.mean(batch.x == 0.0)
    assert at0 == pytest.approx(measure.d0.sum(), abs=0.015)
    assert np.all((batch.x >= 0.0) & (batch.x <= 1.0))
    with pytest.raises(NormalizationError):
        sample_invariant(cftp_table(1.0, 1.0, 1.0), 5, rng)


def test_dict_form_restores_the_measure(ftp):
    measure = invariant_measure(ftp, 1.0)
    assert measures_equal(AtomicDensityMeasure.from_dict(measure.to_dict()), measure)


def test_w1_is_a_distance():
    mu = invariant_measure(TumbleKind.instantaneous(1.0), 1.0)
    nu = invariant_measure(TumbleKind.instantaneous(4.0), 1.0)
    assert w1_distance(mu, mu, bins=20) == pytest.approx(0.0, abs=1e-12)
    d = w1_distance(mu, nu, bins=20)
    assert 0.0 < d <= embedding_diameter(1.0)
    assert w1_distance(nu, mu, bins=20) == pytest.approx(d, rel=1e-9)


def test_w1_between_point_masses():
    a = PointMasses([[0.0, 1.0, 1.0]], [1.0])
    b = PointMasses([[0.5, 1.0, 1.0]], [1.0])
    assert w1_distance(a, b) == pytest.approx(0.5)
    with pytest.raises(MassMismatchError):
        w1_distance(a, PointMasses([[0.5, 1.0, 1.0]], [0.5]))


def test_w1_refinement_settles():
    mu = invariant_measure(TumbleKind.finite(1.0, 1.0), 1.0)
    nu = invariant_measure(TumbleKind.finite(2.0, 1.0), 1.0)
    report = w1_refinement(mu, nu, [25, 50, 100])
    values = [v for _, v in report]
    assert all(v > 0 for v in values)
    # each binned law sits within one bin width of the exact one
    assert abs(values[-1] - values[-2]) <= 2 * (1.0 / 50 + 1.0 / 100)


def test_tv_needs_a_shared_grid(itp):
    measure = invariant_measure(itp, 1.0)
    assert tv_distance(discretize(measure, 10), discretize(measure, 10)) == 0.0
    with pytest.raises(DiscretizationMismatchError):
        tv_distance(discretize(measure, 10), discretize(measure, 12))


def test_point_masses_coarsen_keeps_mass():
    points = np.column_stack([np.linspace(0, 1, 100), np.ones(100), -np.ones(100)])
    cloud = PointMasses(points, np.full(100, 0.01))
    coarse = cloud.coarsen(10)
    assert len(coarse) == 10
    assert coarse.total_mass() == pytest.approx(1.0)
