import numpy as np
import pytest

from vitalrates.core import AgeGrid, MortalitySurface


def gompertz_surface(sex, periods, grid=None, level=1.0, drift=0.02, seed=None):
    """Smooth, strictly positive rates declining over time."""
    grid = grid or AgeGrid.with_open_at(100)
    x = grid.midpoints.copy()
    x[-1] += 2.5
    base = 0.02 * np.exp(-1.5 * x) + 0.0004 + 3e-5 * np.exp(0.09 * x)
    if sex == "M":
        base = base * 1.4
    t = np.arange(len(periods))[:, None]
    rates = level * base[None, :] * np.exp(-drift * t * (1.2 - x[None, :] / 150.0))
    if seed is not None:
        rates = rates * np.exp(np.random.default_rng(seed).normal(0, 0.02, rates.shape))
    return MortalitySurface(sex, tuple(periods), grid, rates)


@pytest.fixture
def surfaces():
    periods = tuple(range(1950, 2010, 5))
    return gompertz_surface("F", periods, seed=1), gompertz_surface("M", periods, seed=2)


@pytest.fixture(scope="session")
def sample_dir(tmp_path_factory):
    from vitalrates.sample import write_sample_dataset

    return write_sample_dataset(tmp_path_factory.mktemp("sample"), n_trajectories=60, seed=7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
