"""
Tests for the lattice-to-continuum convergence study.
"""

import numpy as np
import pytest

from app.config import settings
from app.errors import ConfigurationError
from app.services.convergence import CONVERGENCE_COLUMNS, ConvergenceStudy
from app.services.replica_pool import ReplicaPool


@pytest.fixture
def study(itp):
    return ConvergenceStudy(itp, 1.0, ReplicaPool(workers=1))


def test_table_rows(study):
    frame = study.table([5, 33], 1.0, 0.25, 30, seed=4)
    assert list(frame.columns) == CONVERGENCE_COLUMNS
    assert frame["w1"].iloc[1] < frame["w1"].iloc[0]
    assert frame["bound"].iloc[1] < frame["bound"].iloc[0]
    assert frame["p_exceed"].between(0.0, 1.0).all()
    assert (frame["eta"] == 2.0).all()


def test_deviations_use_common_random_numbers(study):
    first = study.deviations(9, 1.0, 10, seed=2)
    again = study.deviations(9, 1.0, 10, seed=2)
    np.testing.assert_array_equal(first, again)
    assert np.all(first >= 0)


def test_w1_skipped_above_the_solve_limit(study, monkeypatch):
    monkeypatch.setattr(settings, "direct_solve_limit", 10)
    assert np.isnan(study.lattice_w1(5))


def test_lattice_size_must_be_two_or_more(study):
    with pytest.raises(ConfigurationError):
        study.row(1, 1.0, 0.25, 5, seed=0)
