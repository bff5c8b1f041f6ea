import numpy as np
import pytest

from ssta_forecast.grid import CoordinateTable, TimeGrid, anomalies_from_sst, compute_monthly_climatology
from ssta_forecast.synthgen import SynthConfig, generate

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lattice_coords(n_lat, n_lon, lat0=0.0, lon0=0.0, step=1.0):
    ii, jj = np.meshgrid(np.arange(n_lat), np.arange(n_lon), indexing="ij")
    ids = [f"p{k}" for k in range(n_lat * n_lon)]
    return CoordinateTable(ids, lat0 + step * ii.ravel(), lon0 + step * jj.ravel())


def make_grid(values, variable="SSTA", start_month=0):
    values = np.asarray(values, dtype=float)
    return TimeGrid(variable, values, start_month, [f"p{k}" for k in range(values.shape[1])])


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(n_lat=6, n_lon=6, lat0=-25.0, step=10.0, months=12 * 14, seed=7)
    data = generate(cfg)
    clim = compute_monthly_climatology(data.sst)
    return data, anomalies_from_sst(data.sst, clim)
