"""
Shared fixtures for the jamming toolkit tests.
"""

import os
import sys

import numpy as np
import pytest

# Add the repository root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.models.velocity import TumbleKind  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def itp():
    return TumbleKind.instantaneous(1.0)


@pytest.fixture
def ftp():
    return TumbleKind.finite(1.0, 1.0)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Point config dumps at a temporary directory."""
    from app.config import settings

    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "results"))
    return tmp_path
