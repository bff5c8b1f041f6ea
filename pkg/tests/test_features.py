import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssta_forecast.errors import (
    DegenerateNormalization,
    InsufficientHistory,
    LayoutError,
    MissingVariable,
)
from ssta_forecast.features import (
    FeatureRow,
    augment_ud74,
    baltic_training_rows,
    build_baltic_rows,
    build_rg48_rows,
    build_seasonal_dataset,
    build_ud50_rows,
    concat,
    feature_matrix_csv,
    normalize_rows,
)
from ssta_forecast.grid import Block, build_neighbor_map, compute_monthly_climatology, month_index

from .conftest import lattice_coords, make_grid


def _block(values, start=0, **others):
    windows = {"SSTA": np.asarray(values, dtype=float)}
    windows.update({k: np.asarray(v, dtype=float) for k, v in others.items()})
    return Block(windows, start, 3)


def test_rg48_constant_field():
    nmap = build_neighbor_map(lattice_coords(3, 3))
    fm = build_rg48_rows(_block(np.full((12, 9), 0.7)), nmap)
    assert fm.values.shape == (9, 48)
    np.testing.assert_array_equal(fm.values, 0.7)


def test_rg48_matches_brute_force_enumeration(rng):
    coords = lattice_coords(3, 3)
    nmap = build_neighbor_map(coords)
    window = rng.normal(size=(12, 9))
    fm = build_rg48_rows(_block(window), nmap)
    lat, lon = coords.latitude, coords.longitude
    for row, loc in zip(fm.values, fm.location_index):
        nb = [k for k in range(9) if k != loc and abs(lat[k] - lat[loc]) <= 1 and abs(lon[k] - lon[loc]) <= 1]
        for lag in range(12):
            month = 11 - lag
            vals = window[month, nb]
            assert row[lag] == window[month, loc]
            assert row[12 + lag] == pytest.approx(np.mean(vals), abs=1e-15)
            assert row[24 + lag] == np.max(vals)
            assert row[36 + lag] == np.min(vals)


def test_rg48_skips_missing_center_and_falls_back_when_isolated():
    coords = lattice_coords(1, 3, step=2.0)
    present = np.array([True, False, True])
    nmap = build_neighbor_map(coords, present)
    window = np.arange(36.0).reshape(12, 3)
    window[4, 2] = np.nan
    window[:, 1] = np.nan
    fm = build_rg48_rows(_block(window), nmap)
    assert fm.skipped == 2
    assert fm.location_index.tolist() == [0]
    # location 0 has no present neighbor: aggregates equal the center lags
    lags = fm.values[0, :12]
    for k in (1, 2, 3):
        np.testing.assert_array_equal(fm.values[0, 12 * k : 12 * (k + 1)], lags)


def test_rg48_ignores_missing_neighbor_values():
    nmap = build_neighbor_map(lattice_coords(1, 3))
    window = np.zeros((12, 3))
    window[:, 0] = 1.0
    window[:, 2] = 3.0
    window[0, 2] = np.nan
    fm = build_rg48_rows(_block(window), nmap)
    mid = fm.values[list(fm.location_index).index(1)]
    assert mid[12 + 11] == 1.0  # oldest month: only the west neighbor is present
    assert mid[12] == 2.0


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_rg48_aggregates_ordered(n_lat, n_lon, seed):
    rng = np.random.default_rng(seed)
    nmap = build_neighbor_map(lattice_coords(n_lat, n_lon))
    fm = build_rg48_rows(_block(rng.normal(size=(12, n_lat * n_lon))), nmap)
    assert fm.values.shape[1] == 48
    mean, hi, lo = fm.values[:, 12:24], fm.values[:, 24:36], fm.values[:, 36:48]
    assert np.all(lo <= mean + 1e-12) and np.all(mean <= hi + 1e-12)


def _ud_block(rng, n_loc):
    return _block(
        rng.normal(size=(12, n_loc)),
        SST=rng.normal(20, 1, size=(12, n_loc)),
        MSLP=rng.normal(101325, 50, size=(12, n_loc)),
        T2M=rng.normal(18, 1, size=(12, n_loc)),
    )


def test_ud50_layout(rng):
    coords = lattice_coords(2, 2, lat0=50, lon0=10, step=0.25)
    block = _ud_block(rng, 4)
    fm = build_ud50_rows(block, coords, target=np.arange(4.0))
    assert fm.values.shape == (4, 50)
    np.testing.assert_array_equal(fm.values[1, :12], block["SSTA"][:, 1])
    np.testing.assert_array_equal(fm.values[1, 36:48], block["T2M"][:, 1])
    assert fm.values[3, 48:].tolist() == [50.25, 10.25]
    assert fm.target.tolist() == [0.0, 1.0, 2.0, 3.0]
    with pytest.raises(MissingVariable):
        build_ud50_rows(_block(block["SSTA"]), coords)


def test_ud50_identical_series_differ_only_in_coordinates():
    coords = lattice_coords(1, 2, lat0=56, lon0=19.6875, step=2.0)
    series = np.arange(12.0)[:, None].repeat(2, axis=1)
    fm = build_ud50_rows(_block(series, SST=series, MSLP=series, T2M=series), coords)
    diff = fm.values[0] != fm.values[1]
    assert diff.tolist() == [False] * 48 + [False, True]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**31))
def test_ud50_is_a_pure_reshaping(n_loc, seed):
    rng = np.random.default_rng(seed)
    coords = lattice_coords(1, n_loc)
    block = _ud_block(rng, n_loc)
    fm = build_ud50_rows(block, coords)
    source = np.concatenate(
        [block[v].ravel() for v in ("SSTA", "SST", "MSLP", "T2M")] + [coords.latitude, coords.longitude]
    )
    np.testing.assert_array_equal(np.sort(fm.values.ravel()), np.sort(source))


def test_ud74_appends_climatology_per_location(rng):
    coords = lattice_coords(1, 3)
    ssta = make_grid(rng.normal(size=(36, 3)))
    clim = compute_monthly_climatology(ssta)
    block = _ud_block(rng, 3)
    fm = augment_ud74(build_ud50_rows(block, coords), clim)
    assert fm.layout == "UD74" and fm.values.shape == (3, 74)
    for row, loc in zip(fm.values, fm.location_index):
        np.testing.assert_array_equal(row[50:62], clim.avg[:, loc])
        np.testing.assert_array_equal(row[62:74], clim.std[:, loc])
    with pytest.raises(LayoutError):
        augment_ud74(fm, clim)


def test_ud74_constant_climatology(rng):
    clim = compute_monthly_climatology(make_grid(np.full((24, 2), 1.5)))
    fm = augment_ud74(build_ud50_rows(_ud_block(rng, 2), lattice_coords(1, 2)), clim)
    np.testing.assert_array_equal(fm.values[:, 50:62], 1.5)
    np.testing.assert_array_equal(fm.values[:, 62:74], 0.0)


def test_flattened_row_count_is_locations_times_blocks(rng):
    coords = lattice_coords(2, 3)
    blocks = [_ud_block(rng, 6) for _ in range(5)]
    assert len(concat(build_ud50_rows(b, coords) for b in blocks)) == 6 * 5


def test_baltic_rows():
    values = np.zeros((36, 1))
    sept = [month_index(1940, 9), month_index(1941, 9), month_index(1942, 9)]
    values[sept, 0] = [0.1, 0.2, 0.3]
    g = make_grid(values)
    row = build_baltic_rows(g, 0, sept[-1])
    assert row.values.tolist() == [0.1, 0.2, 0.3]
    assert row.layout == "BALTIC3" and row.target_month == sept[-1] + 12


def test_baltic_insufficient_history():
    g = make_grid(np.zeros((20, 1)))  # Jan 1940 .. Aug 1941: Septembers 1940 only
    with pytest.raises(InsufficientHistory):
        build_baltic_rows(g, 0, month_index(1940, 9))
    with pytest.raises(InsufficientHistory):
        baltic_training_rows(g, 0)


def test_baltic_training_rows_count():
    g = make_grid(np.arange(12 * 10.0)[:, None])
    fm = baltic_training_rows(g, "p0")
    # Septembers 1940..1949; triples ending 1942..1948 have an observed next September
    assert len(fm) == 7
    assert fm.target.tolist() == [g.values[month_index(y, 9), 0] for y in range(1943, 1950)]


def test_seasonal_dataset_labels_and_normalization():
    values = np.tile(np.array([1.0, 2.0, 3.0]), (24, 1))
    ds = build_seasonal_dataset(make_grid(values, "SST"))
    assert ds.labels.tolist() == list(range(12)) * 2
    np.testing.assert_allclose(ds.rows[0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)


def test_seasonal_labels_follow_start_month():
    ds = build_seasonal_dataset(make_grid(np.random.default_rng(0).normal(size=(30, 4)), "SST", start_month=7))
    assert ds.labels[0] == 7
    assert np.all(ds.labels[12:] == ds.labels[:-12])
    np.testing.assert_allclose(ds.rows.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.rows.std(axis=1), 1.0, atol=1e-12)


def test_seasonal_degenerate_inputs():
    assert np.all(normalize_rows(np.full((1, 5), 3.0)) == 0.0)
    with pytest.raises(DegenerateNormalization):
        build_seasonal_dataset(make_grid(np.zeros((24, 1)), "SST"))
    with pytest.raises(InsufficientHistory):
        build_seasonal_dataset(make_grid(np.zeros((11, 3)), "SST"))


def test_feature_row_length_enforced():
    with pytest.raises(LayoutError):
        FeatureRow("RG48", np.zeros(47), 0)


def test_feature_csv_header():
    nmap = build_neighbor_map(lattice_coords(1, 2))
    text = feature_matrix_csv(build_rg48_rows(_block(np.ones((12, 2))), nmap))
    lines = text.splitlines()
    assert lines[0] == "# layout=RG48"
    assert lines[1].split(",")[:2] == ["x0", "x1"]
    assert len(lines) == 4
