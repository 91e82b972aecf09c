"""Shared test fixtures: serial settings, kernels, catalog coefficients."""

from __future__ import annotations

import pytest

from app.config import settings
from app.kernels import construct_kernel
from app.media import catalog


@pytest.fixture(autouse=True)
def _test_settings(tmp_path):
    """Ensure test-safe settings for every test: serial runs, output under tmp_path."""
    original_jobs = settings.jobs
    original_output = settings.output_dir
    original_level = settings.log_level
    settings.jobs = 1
    settings.output_dir = str(tmp_path / "results")
    settings.log_level = "WARNING"
    yield
    settings.jobs = original_jobs
    settings.output_dir = original_output
    settings.log_level = original_level


@pytest.fixture
def kernel():
    """The default (p=3, q=6) kernel."""
    return construct_kernel(3, 6)


@pytest.fixture
def constant_1d():
    return catalog("constant", 1, 1.0)


@pytest.fixture
def periodic_1d():
    return catalog("periodic-1d")


@pytest.fixture
def locally_periodic_1d():
    return catalog("locally-periodic-1d")


def write_ini(path, text: str):
    """Write an experiment config file and return its path."""
    path.write_text(text.strip() + "\n")
    return path
