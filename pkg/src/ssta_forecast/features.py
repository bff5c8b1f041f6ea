"""Tabular feature layouts built from blocks.

RG48    SSTA lags 1..12 (most recent first), then per-month neighbor mean,
        max and min over the 8-neighborhood, each in the same lag order.
UD50    SSTA, SST, MSLP, T2M windows (oldest first) then latitude, longitude.
UD74    UD50 plus the 12 monthly SSTA averages and 12 monthly std devs of the
        row's location.
BALTIC3 SSTA of the three most recent Septembers, oldest first.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateNormalization,
    InsufficientHistory,
    LayoutError,
    RangeError,
    ShapeError,
)
from .grid import (
    Block,
    ClimatologyTable,
    CoordinateTable,
    NeighborMap,
    TimeGrid,
    calendar_month,
    format_float,
)

LAYOUT_WIDTHS = {"RG48": 48, "UD50": 50, "UD74": 74, "BALTIC3": 3}
SEPTEMBER = 8


@dataclass(frozen=True)
class FeatureRow:
    layout: str
    values: np.ndarray
    location_index: int
    latitude: float = float("nan")
    longitude: float = float("nan")
    season: int = 0  # 1..12, 0 when unknown
    target_month: int = -1

    def __post_init__(self):
        if len(self.values) != LAYOUT_WIDTHS[self.layout]:
            raise LayoutError(f"{self.layout} rows have {LAYOUT_WIDTHS[self.layout]} entries, got {len(self.values)}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    layout: str
    values: np.ndarray
    location_index: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    season: np.ndarray
    target_month: np.ndarray
    target: np.ndarray | None = None
    skipped: int = 0

    def __post_init__(self):
        width = LAYOUT_WIDTHS[self.layout]
        values = np.asarray(self.values, dtype=float).reshape(-1, width)
        object.__setattr__(self, "values", values)
        n = len(values)
        for name, dtype in (
            ("location_index", np.int64),
            ("latitude", float),
            ("longitude", float),
            ("season", np.int64),
            ("target_month", np.int64),
        ):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.ndim == 0:
                arr = np.full(n, arr, dtype=dtype)
            if len(arr) != n:
                raise ShapeError(f"{name} has {len(arr)} entries for {n} rows")
            object.__setattr__(self, name, arr)
        if self.target is not None:
            target = np.asarray(self.target, dtype=float)
            if len(target) != n:
                raise ShapeError(f"target has {len(target)} entries for {n} rows")
            object.__setattr__(self, "target", target)

    def __len__(self):
        return len(self.values)

    @property
    def width(self):
        return self.values.shape[1]

    def row(self, i: int) -> FeatureRow:
        return FeatureRow(
            self.layout,
            self.values[i],
            int(self.location_index[i]),
            float(self.latitude[i]),
            float(self.longitude[i]),
            int(self.season[i]),
            int(self.target_month[i]),
        )

    def take(self, mask) -> "FeatureMatrix":
        return replace(
            self,
            values=self.values[mask],
            location_index=self.location_index[mask],
            latitude=self.latitude[mask],
            longitude=self.longitude[mask],
            season=self.season[mask],
            target_month=self.target_month[mask],
            target=None if self.target is None else self.target[mask],
        )

    def with_season(self, season) -> "FeatureMatrix":
        return replace(self, season=np.broadcast_to(np.asarray(season, dtype=np.int64), len(self)).copy())


def concat(matrices) -> FeatureMatrix:
    """Stack matrices of one layout in the order given."""
    matrices = list(matrices)
    if not matrices:
        raise ShapeError("nothing to concatenate")
    layouts = {m.layout for m in matrices}
    if len(layouts) != 1:
        raise LayoutError(f"cannot mix layouts {sorted(layouts)}")
    has_target = all(m.target is not None for m in matrices)
    return FeatureMatrix(
        matrices[0].layout,
        np.concatenate([m.values for m in matrices]),
        np.concatenate([m.location_index for m in matrices]),
        np.concatenate([m.latitude for m in matrices]),
        np.concatenate([m.longitude for m in matrices]),
        np.concatenate([m.season for m in matrices]),
        np.concatenate([m.target_month for m in matrices]),
        np.concatenate([m.target for m in matrices]) if has_target else None,
        sum(m.skipped for m in matrices),
    )


def feature_matrix_csv(fm: FeatureMatrix) -> str:
    """CSV dump with a ``# layout=...`` comment line, for pipeline debugging."""
    out = io.StringIO()
    out.write(f"# layout={fm.layout}\n")
    cols = [f"x{i}" for i in range(fm.width)]
    cols += ["location_index", "latitude", "longitude", "season", "target_month", "target"]
    out.write(",".join(cols) + "\n")
    target = fm.target if fm.target is not None else np.full(len(fm), np.nan)
    for i in range(len(fm)):
        fields = [format_float(v) for v in fm.values[i].tolist()]
        fields += [
            str(int(fm.location_index[i])),
            format_float(fm.latitude[i]),
            format_float(fm.longitude[i]),
            str(int(fm.season[i])),
            str(int(fm.target_month[i])),
            format_float(target[i]),
        ]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def _coords_or_nan(coords, n):
    if coords is None:
        return np.full(n, np.nan), np.full(n, np.nan)
    if len(coords) != n:
        raise ShapeError(f"{len(coords)} coordinates for {n} locations")
    return coords.latitude, coords.longitude


def _emit(layout, values, keep, block, coords, target, skipped):
    n = values.shape[0]
    lat, lon = _coords_or_nan(coords, n)
    idx = np.flatnonzero(keep)
    if target is not None:
        target = np.asarray(target, dtype=float)[idx]
    return FeatureMatrix(
        layout,
        values[idx],
        idx,
        lat[idx],
        lon[idx],
        calendar_month(block.target_month) + 1,
        block.target_month,
        target,
        skipped,
    )


def neighbor_aggregates(window: np.ndarray, nmap: NeighborMap):
    """Per-month mean/max/min over present neighbors, each shaped (L, months).

    Missing neighbor values are ignored; a location whose neighborhood has no
    value falls back to its own value.
    """
    months, n_loc = window.shape
    if len(nmap) != n_loc:
        raise ShapeError(f"neighbor map covers {len(nmap)} locations, window has {n_loc}")
    pad = nmap.padded()
    gathered = window[:, np.where(pad >= 0, pad, 0)]  # months x L x 8
    valid = (pad >= 0)[None, :, :] & ~np.isnan(gathered)
    count = valid.sum(axis=2)
    # mean taken as center + mean deviation: exact on spatially constant fields
    dev = np.where(valid, gathered - window[:, :, None], 0.0).sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = window + dev / count
    hi = np.where(valid, gathered, -np.inf).max(axis=2)
    lo = np.where(valid, gathered, np.inf).min(axis=2)
    empty = count == 0
    mean = np.where(empty, window, mean)
    hi = np.where(empty, window, hi)
    lo = np.where(empty, window, lo)
    return mean.T, hi.T, lo.T


def build_rg48_rows(block: Block, nmap: NeighborMap, coords: CoordinateTable | None = None, target=None):
    window = block["SSTA"]
    if window.shape[0] != 12:
        raise ShapeError(f"RG48 needs a 12-month window, got {window.shape[0]}")
    recent_first = window[::-1]
    mean, hi, lo = neighbor_aggregates(recent_first, nmap)
    values = np.hstack([recent_first.T, mean, hi, lo])
    keep = ~np.isnan(recent_first).any(axis=0)
    return _emit("RG48", values, keep, block, coords, target, int((~keep).sum()))


def build_ud50_rows(block: Block, coords: CoordinateTable, target=None):
    parts = [block[name] for name in ("SSTA", "SST", "MSLP", "T2M")]
    n_loc = parts[0].shape[1]
    if len(coords) != n_loc:
        raise ShapeError(f"{len(coords)} coordinates for {n_loc} locations")
    values = np.hstack([p.T for p in parts] + [coords.latitude[:, None], coords.longitude[:, None]])
    keep = ~np.isnan(values).any(axis=1)
    return _emit("UD50", values, keep, block, coords, target, int((~keep).sum()))


def augment_ud74(rows: FeatureMatrix, clim: ClimatologyTable) -> FeatureMatrix:
    if rows.layout != "UD50":
        raise LayoutError(f"augment_ud74 expects UD50 rows, got {rows.layout}")
    if len(rows) and rows.location_index.max() >= clim.n_locations:
        raise ShapeError("climatology does not cover every row location")
    loc = rows.location_index
    values = np.hstack([rows.values, clim.avg[:, loc].T, clim.std[:, loc].T])
    return replace(rows, layout="UD74", values=values)


def _location_column(grid: TimeGrid, location) -> int:
    if isinstance(location, (int, np.integer)):
        if not 0 <= location < grid.n_locations:
            raise RangeError(f"location index {location} out of range")
        return int(location)
    try:
        return grid.location_ids.index(str(location))
    except ValueError:
        raise RangeError(f"unknown location {location!r}") from None


def build_baltic_rows(ssta: TimeGrid, location, anchor_september: int, n_septembers: int = 3) -> FeatureRow:
    """Septembers ``anchor - 12*(n-1) .. anchor`` (oldest first) at one location.

    The row forecasts the September after ``anchor_september``.
    """
    if calendar_month(anchor_september) != SEPTEMBER:
        raise RangeError(f"month index {anchor_september} is not a September")
    col = _location_column(ssta, location)
    months = [anchor_september - 12 * k for k in range(n_septembers - 1, -1, -1)]
    if months[0] < ssta.start_month or months[-1] > ssta.last_month:
        raise InsufficientHistory(
            f"need {n_septembers} Septembers ending at month {anchor_september}, grid covers "
            f"{ssta.start_month}..{ssta.last_month}"
        )
    values = np.array([ssta.row(m)[col] for m in months])
    if np.isnan(values).any():
        raise InsufficientHistory("a required September value is missing")
    layout = "BALTIC3" if n_septembers == 3 else None
    if layout is None:
        raise LayoutError("only the 3-September layout is defined")
    return FeatureRow(layout, values, col, season=SEPTEMBER + 1, target_month=anchor_september + 12)


def septembers(grid: TimeGrid) -> np.ndarray:
    months = grid.months
    return months[calendar_month(months) == SEPTEMBER]


def baltic_training_rows(ssta: TimeGrid, location, n_septembers: int = 3) -> FeatureMatrix:
    """Every September triple whose following September is observed."""
    col = _location_column(ssta, location)
    rows, targets, target_months = [], [], []
    for anchor in septembers(ssta):
        if anchor + 12 > ssta.last_month or anchor - 12 * (n_septembers - 1) < ssta.start_month:
            continue
        try:
            row = build_baltic_rows(ssta, col, int(anchor), n_septembers)
        except InsufficientHistory:
            continue
        target = ssta.row(int(anchor) + 12)[col]
        if np.isnan(target):
            continue
        rows.append(row.values)
        targets.append(target)
        target_months.append(row.target_month)
    if not rows:
        raise InsufficientHistory("no complete September triple with a target")
    return FeatureMatrix(
        "BALTIC3", np.array(rows), col, np.nan, np.nan, SEPTEMBER + 1, target_months, targets
    )


@dataclass(frozen=True, eq=False)
class SeasonalDataset:
    rows: np.ndarray
    labels: np.ndarray
    columns: np.ndarray  # grid columns used as inputs


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Population z-score of each row; constant rows become zeros, NaN becomes 0."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    present = ~np.isnan(values)
    count = present.sum(axis=1, keepdims=True)
    safe = np.maximum(count, 1)
    mean = np.where(present, values, 0.0).sum(axis=1, keepdims=True) / safe
    dev = np.where(present, values - mean, 0.0)
    std = np.sqrt((dev**2).sum(axis=1, keepdims=True) / safe)
    scale = np.where(std > 0, std, 1.0)
    return np.where(std > 0, dev / scale, 0.0)


def build_seasonal_dataset(sst: TimeGrid) -> SeasonalDataset:
    """One row per month: the global SST field z-scored across locations,
    labeled with its calendar month (0..11)."""
    if sst.n_months < 12:
        raise InsufficientHistory(f"need at least 12 months, got {sst.n_months}")
    columns = np.flatnonzero(~sst.absent)
    if len(columns) < 2:
        raise DegenerateNormalization("per-row normalization needs at least 2 locations")
    rows = normalize_rows(sst.values[:, columns])
    labels = calendar_month(sst.months).astype(np.int64)
    return SeasonalDataset(rows, labels, columns)
