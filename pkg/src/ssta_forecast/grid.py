"""Gridded monthly data: CSV ingestion, climatology, anomalies, blocks and neighbors.

Month indices count from January 1940 (index 0).  The value CSVs carry no
timestamps, so every grid is anchored by the caller through ``start_month``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateLocation,
    EmptyInput,
    InsufficientCoverage,
    LatticeError,
    MissingVariable,
    NoBlocks,
    ParseError,
    RangeError,
    ShapeError,
)

VARIABLES = ("SSTA", "SST", "MSLP", "T2M")
EPOCH_YEAR = 1940
MISSING_TOKENS = ("", "NaN", "nan")


def month_index(year: int, month: int) -> int:
    """Month index of calendar ``month`` (1-12) in ``year``."""
    if not 1 <= month <= 12:
        raise RangeError(f"month {month} outside 1..12")
    return 12 * (year - EPOCH_YEAR) + month - 1


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` into a month index."""
    try:
        year, month = text.strip().split("-")
        return month_index(int(year), int(month))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, RangeError):
            raise
        raise RangeError(f"bad month {text!r}, expected YYYY-MM") from None


def format_month(index: int) -> str:
    return f"{year_of(index):04d}-{calendar_month(index) + 1:02d}"


def calendar_month(index):
    """Calendar month 0..11 (January = 0); works on scalars and arrays."""
    return np.mod(index, 12) if isinstance(index, np.ndarray) else index % 12


def year_of(index):
    return EPOCH_YEAR + (np.floor_divide(index, 12) if isinstance(index, np.ndarray) else index // 12)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Dense (time x location) matrix of one variable; NaN marks missing."""

    variable: str
    values: np.ndarray
    start_month: int
    location_ids: tuple

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValueError(f"unknown variable {self.variable!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"grid must be a non-empty T x L matrix, got shape {values.shape}")
        ids = tuple(str(i) for i in self.location_ids)
        if len(ids) != values.shape[1]:
            raise ShapeError(f"{len(ids)} location ids for {values.shape[1]} columns")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "location_ids", ids)
        object.__setattr__(self, "start_month", int(self.start_month))

    @property
    def n_months(self) -> int:
        return self.values.shape[0]

    @property
    def n_locations(self) -> int:
        return self.values.shape[1]

    @property
    def end_month(self) -> int:
        """Month index one past the last row."""
        return self.start_month + self.n_months

    @property
    def last_month(self) -> int:
        return self.end_month - 1

    @property
    def months(self) -> np.ndarray:
        return np.arange(self.start_month, self.end_month)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def absent(self) -> np.ndarray:
        """Locations with no value at any time step (land)."""
        return self.missing.all(axis=0)

    def window(self, first: int, stop: int) -> np.ndarray:
        """Rows for month indices ``first`` .. ``stop - 1`` (a read-only view)."""
        if first < self.start_month or stop > self.end_month or stop < first:
            raise RangeError(
                f"months {format_month(first)}..{format_month(stop - 1)} outside grid "
                f"{format_month(self.start_month)}..{format_month(self.last_month)}"
            )
        return self.values[first - self.start_month : stop - self.start_month]

    def row(self, month: int) -> np.ndarray:
        return self.window(month, month + 1)[0]

    def with_values(self, values, start_month=None, variable=None) -> "TimeGrid":
        return TimeGrid(
            variable or self.variable,
            values,
            self.start_month if start_month is None else start_month,
            self.location_ids,
        )

    def until(self, last_month: int) -> "TimeGrid":
        """Copy restricted to months up to and including ``last_month``."""
        return self.with_values(self.window(self.start_month, last_month + 1))

    def select(self, columns) -> "TimeGrid":
        columns = np.asarray(columns)
        if columns.dtype == bool:
            columns = np.flatnonzero(columns)
        return TimeGrid(
            self.variable,
            self.values[:, columns],
            self.start_month,
            [self.location_ids[c] for c in columns],
        )

    def drop_absent(self) -> "TimeGrid":
        return self.select(~self.absent)


def _read_text(text) -> str:
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return text


def _split_lines(text: str) -> list[str]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def _parse_float(token: str, line: int) -> float:
    if token in MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(line, reason=f"non-numeric field {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, reason=f"non-finite field {token!r}")
    return value


def parse_value_csv(text, variable: str, start_month: int = 0) -> TimeGrid:
    """Parse a value CSV (header of location ids, one row per month)."""
    lines = _split_lines(_read_text(text))
    if not lines or lines == [""]:
        raise EmptyInput("value CSV is empty")
    header = [h.strip() for h in lines[0].split(",")]
    if len(set(header)) != len(header):
        raise DuplicateLocation("duplicate location id in header")
    width = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != width:
            raise ParseError(lineno, width, len(fields))
        rows.append([_parse_float(f.strip(), lineno) for f in fields])
    if not rows:
        raise EmptyInput("value CSV has a header but no data rows")
    return TimeGrid(variable, np.array(rows, dtype=float), start_month, header)


def format_float(value: float) -> str:
    """Shortest round-trip decimal; missing becomes an empty field."""
    return "" if math.isnan(value) else repr(float(value))


def serialize_value_csv(grid: TimeGrid) -> str:
    out = io.StringIO()
    out.write(",".join(grid.location_ids) + "\n")
    for row in grid.values.tolist():
        out.write(",".join(format_float(v) for v in row) + "\n")
    return out.getvalue()


def _lattice_step(values: np.ndarray, tol: float = 1e-6):
    """Common lattice step of sorted unique ``values``; None when a single value.

    Raises LatticeError when the gaps are not integer multiples of the smallest gap.
    """
    uniq = np.unique(values)
    if len(uniq) < 2:
        return None
    gaps = np.diff(uniq)
    step = gaps.min()
    ratio = gaps / step
    if np.any(np.abs(ratio - np.round(ratio)) > tol * max(1.0, ratio.max())):
        raise LatticeError("coordinates are not on a regular lattice")
    return float(step)


@dataclass(frozen=True, eq=False)
class CoordinateTable:
    location_ids: tuple
    latitude: np.ndarray
    longitude: np.ndarray
    regular: bool = field(init=False)
    lat_step: float | None = field(init=False)
    lon_step: float | None = field(init=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.location_ids)
        lat = _freeze(self.latitude)
        lon = _freeze(self.longitude)
        if not (len(ids) == len(lat) == len(lon)):
            raise ShapeError("coordinate columns have different lengths")
        seen = set()
        for i in ids:
            if i in seen:
                raise DuplicateLocation(f"duplicate location id {i!r}")
            seen.add(i)
        if np.any(~np.isfinite(lat)) or np.any((lat < -90) | (lat > 90)):
            raise RangeError("latitude outside [-90, 90]")
        if np.any(~np.isfinite(lon)) or np.any((lon < -180) | (lon >= 180)):
            raise RangeError("longitude outside [-180, 180)")
        object.__setattr__(self, "location_ids", ids)
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)
        try:
            steps = (_lattice_step(lat), _lattice_step(lon))
            regular = True
        except LatticeError:
            steps, regular = (None, None), False
        object.__setattr__(self, "regular", regular)
        object.__setattr__(self, "lat_step", steps[0])
        object.__setattr__(self, "lon_step", steps[1])

    def __len__(self):
        return len(self.location_ids)

    def entries(self):
        return list(zip(self.location_ids, self.latitude.tolist(), self.longitude.tolist()))

    def index(self) -> dict:
        return {loc: i for i, loc in enumerate(self.location_ids)}

    def aligned_to(self, location_ids: Sequence[str]) -> "CoordinateTable":
        """Reorder/subset to the given ids (e.g. the columns of a grid)."""
        idx = self.index()
        try:
            order = [idx[str(i)] for i in location_ids]
        except KeyError as exc:
            raise ShapeError(f"location {exc.args[0]!r} has no coordinates") from None
        return CoordinateTable(
            [self.location_ids[i] for i in order], self.latitude[order], self.longitude[order]
        )


def parse_coordinate_csv(text) -> CoordinateTable:
    """Parse ``location_id,latitude,longitude`` lines; the header row is optional."""
    lines = _split_lines(_read_text(text))
    ids, lats, lons = [], [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and fields[0] == "location_id":
            continue
        if len(fields) != 3:
            raise ParseError(lineno, 3, len(fields))
        lat = _parse_float(fields[1], lineno)
        lon = _parse_float(fields[2], lineno)
        if math.isnan(lat) or math.isnan(lon):
            raise ParseError(lineno, reason="missing coordinate")
        ids.append(fields[0])
        lats.append(lat)
        lons.append(lon)
    if not ids:
        raise EmptyInput("coordinate CSV is empty")
    return CoordinateTable(ids, np.array(lats), np.array(lons))


def serialize_coordinate_csv(coords: CoordinateTable) -> str:
    lines = ["location_id,latitude,longitude"]
    for loc, lat, lon in coords.entries():
        lines.append(f"{loc},{format_float(lat)},{format_float(lon)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class ClimatologyTable:
    """Per (calendar month, location) mean and population std over a base period."""

    avg: np.ndarray
    std: np.ndarray
    base_period: tuple
    location_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "avg", _freeze(self.avg))
        object.__setattr__(self, "std", _freeze(self.std))
        object.__setattr__(self, "location_ids", tuple(self.location_ids))
        if self.avg.shape != self.std.shape or self.avg.shape[0] != 12:
            raise ShapeError("climatology tables must both be 12 x L")

    @property
    def n_locations(self):
        return self.avg.shape[1]


def compute_monthly_climatology(sst: TimeGrid, base_period=None) -> ClimatologyTable:
    """Mean and population std per calendar month over ``base_period`` (inclusive month indices)."""
    first, last = base_period if base_period is not None else (sst.start_month, sst.last_month)
    if last < first:
        raise RangeError("base period ends before it starts")
    values = sst.window(first, last + 1)
    cal = calendar_month(np.arange(first, last + 1))
    avg = np.full((12, sst.n_locations), np.nan)
    std = np.full((12, sst.n_locations), np.nan)
    for m in range(12):
        rows = values[cal == m]
        if len(rows) == 0:
            raise InsufficientCoverage(m)
        present = ~np.isnan(rows)
        count = present.sum(axis=0)
        ok = count > 0
        filled = np.where(present, rows, 0.0)
        mean = filled.sum(axis=0)[ok] / count[ok]
        avg[m, ok] = mean
        dev = np.where(present[:, ok], rows[:, ok] - mean, 0.0)
        std[m, ok] = np.sqrt((dev**2).sum(axis=0) / count[ok])
    return ClimatologyTable(avg, std, (int(first), int(last)), sst.location_ids)


def anomalies_from_sst(sst: TimeGrid, clim: ClimatologyTable) -> TimeGrid:
    if clim.n_locations != sst.n_locations:
        raise ShapeError(f"climatology has {clim.n_locations} locations, grid has {sst.n_locations}")
    cal = calendar_month(sst.months)
    return sst.with_values(sst.values - clim.avg[cal], variable="SSTA")


def add_climatology(ssta: TimeGrid, clim: ClimatologyTable, variable: str = "SST") -> TimeGrid:
    """Inverse of :func:`anomalies_from_sst`."""
    if clim.n_locations != ssta.n_locations:
        raise ShapeError(f"climatology has {clim.n_locations} locations, grid has {ssta.n_locations}")
    cal = calendar_month(ssta.months)
    return ssta.with_values(ssta.values + clim.avg[cal], variable=variable)


@dataclass(frozen=True, eq=False)
class Block:
    """Twelve consecutive input months per variable plus the forecast offset."""

    windows: Mapping[str, np.ndarray]
    window_start: int
    target_offset: int = 3

    @property
    def length(self) -> int:
        return next(iter(self.windows.values())).shape[0]

    @property
    def window_end(self) -> int:
        """Month index of the last input row."""
        return self.window_start + self.length - 1

    @property
    def target_month(self) -> int:
        return self.window_end + self.target_offset

    def __getitem__(self, variable: str) -> np.ndarray:
        try:
            return self.windows[variable]
        except KeyError:
            raise MissingVariable(variable) from None


def _check_aligned(grids: Mapping[str, TimeGrid]):
    ref = next(iter(grids.values()))
    for name, g in grids.items():
        if (g.start_month, g.n_months, g.location_ids) != (ref.start_month, ref.n_months, ref.location_ids):
            raise ShapeError(f"grid {name} is not aligned with the others in time and locations")
    return ref


def extract_blocks(
    grids: Mapping[str, TimeGrid] | TimeGrid,
    window: int = 12,
    target_offset: int = 3,
    stride: int = 1,
    all_windows: bool = False,
):
    """Slide a ``window``-month input window over aligned grids.

    Returns ``(Block, target)`` pairs.  Every window whose target month exists
    in the SSTA grid is emitted with its target row.  The most recent window
    is appended with target None when it has no target (the forecast origin).
    With ``all_windows`` every stride step is emitted, targeted or not, as in
    a timestamp-free test file.
    """
    if isinstance(grids, TimeGrid):
        grids = {grids.variable: grids}
    if "SSTA" not in grids:
        raise MissingVariable("SSTA")
    ref = _check_aligned(grids)
    T = ref.n_months
    if T < window:
        raise NoBlocks(f"{T} months is shorter than the {window}-month window")
    ssta = grids["SSTA"].values

    def make(s):
        views = {name: g.values[s : s + window] for name, g in grids.items()}
        t = s + window - 1 + target_offset
        target = ssta[t] if t < T else None
        return Block(views, ref.start_month + s, target_offset), target

    if all_windows:
        return [make(s) for s in range(0, T - window + 1, stride)]
    n_targeted = T - window - target_offset + 1
    out = [make(s) for s in range(0, max(n_targeted, 0), stride)]
    last = T - window
    if last >= max(n_targeted, 0):
        out.append(make(last))
    return out


@dataclass(frozen=True, eq=False)
class NeighborMap:
    neighbors: tuple

    def __len__(self):
        return len(self.neighbors)

    def __getitem__(self, i):
        return self.neighbors[i]

    def padded(self, width: int = 8) -> np.ndarray:
        """L x width index array, -1 where a slot is empty."""
        out = np.full((len(self.neighbors), width), -1, dtype=np.int64)
        for i, nb in enumerate(self.neighbors):
            out[i, : len(nb)] = nb
        return out


def build_neighbor_map(coords: CoordinateTable, present=None, tol: float = 1e-6) -> NeighborMap:
    """Lattice 8-neighborhood: one grid step in latitude and/or longitude.

    ``present`` masks out absent (land/missing) locations, which get no
    neighbors and are never listed as anyone's neighbor.  Longitude wraps at
    the dateline when the lattice covers the full circle.
    """
    if not coords.regular:
        raise LatticeError("coordinates are not on a regular lattice")
    n = len(coords)
    present = np.ones(n, dtype=bool) if present is None else np.asarray(present, dtype=bool)
    if present.shape != (n,):
        raise ShapeError("present mask does not match the coordinate table")
    lat_step = coords.lat_step or 1.0
    lon_step = coords.lon_step or 1.0
    lat_min = coords.latitude.min()
    lon_min = coords.longitude.min()
    ii = np.round((coords.latitude - lat_min) / lat_step).astype(np.int64)
    jj = np.round((coords.longitude - lon_min) / lon_step).astype(np.int64)
    n_circle = int(round(360.0 / lon_step))
    wraps = (
        coords.lon_step is not None
        and abs(n_circle * lon_step - 360.0) < tol * 360.0
        and jj.max() == n_circle - 1
    )
    lookup = {}
    for k in np.flatnonzero(present):
        key = (int(ii[k]), int(jj[k]))
        if key in lookup:
            raise LatticeError(f"two locations share lattice cell {key}")
        lookup[key] = int(k)
    out = []
    for k in range(n):
        if not present[k]:
            out.append(())
            continue
        nb = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                j = int(jj[k]) + dj
                if wraps:
                    j %= n_circle
                other = lookup.get((int(ii[k]) + di, j))
                if other is not None and other != k and other not in nb:
                    nb.append(other)
        out.append(tuple(sorted(nb)))
    return NeighborMap(tuple(out))
