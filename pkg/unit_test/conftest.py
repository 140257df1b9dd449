"""Shared test fixtures for unit tests."""
import sys
import os
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.config import get_settings
from lqgsim.models.models import FieldEngine
from lqgsim.services.field import sample_stack


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test sees settings built from a clean environment."""
    monkeypatch.delenv("LQG_THREADS", raising=False)
    monkeypatch.delenv("THREADS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def small_stack():
    return sample_stack(FieldEngine.HAT_H, 32, 3, seed=7, time_slices_per_octave=2, threads=1)


@pytest.fixture(scope="session")
def partition_stack():
    return sample_stack(FieldEngine.HAT_H, 128, 5, seed=11, time_slices_per_octave=2, threads=1)
