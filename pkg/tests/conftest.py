"""Shared fixtures and the --runslow switch."""

import numpy as np
import pytest

from detection.thresholds import Provenance, ThresholdProfile


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-scale Monte Carlo regressions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_profile(thresholds, alphas=None, method=None, series_length=None) -> ThresholdProfile:
    alphas = alphas or [0.01] * len(thresholds)
    return ThresholdProfile.from_values(
        alphas, thresholds, Provenance(kind="user_supplied"),
        method=method, series_length=series_length,
    )


@pytest.fixture
def profile_factory():
    return make_profile
