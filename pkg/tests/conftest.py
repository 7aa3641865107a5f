"""Shared fixtures and the `slow` marker."""

import sys
from pathlib import Path

import pytest

# Add the repository root to the path so `src` imports as a package
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import RunConfig, Scenario, SourceParams, TrialTiming, get_preset  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long Monte Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo check, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def timing():
    return TrialTiming(trials_per_run=20_000)


@pytest.fixture()
def ideal_run():
    """Lossless, noiseless pair source."""
    return RunConfig(source=SourceParams(p=0.05), timing=TrialTiming(trials_per_run=20_000), seed=11)


@pytest.fixture()
def noisy_run():
    """Pair source with every loss and noise channel switched on."""
    source = SourceParams(p=0.05, zeta=0.6, eta1=0.5, eta2=0.5, bg1=0.02, bg2=0.03, leak2=0.01)
    return RunConfig(source=source, timing=TrialTiming(trials_per_run=20_000), seed=12)


@pytest.fixture()
def busy_scenario():
    """Small scenario with enough coincidences in every channel for a stable report."""
    source = SourceParams(p=0.2, eta1=0.5, eta2=0.5, bg1=0.05, bg2=0.05)
    run = RunConfig(source=source, timing=TrialTiming(trials_per_run=20_000), seed=21)
    return Scenario(name="busy", description="test scenario", run=run)


@pytest.fixture()
def paper_scenario():
    return get_preset("paper-T60")

