"""Forecasters assembled from fitted pieces.

The composite forecast averages two Bayesian ridge models fitted on the
last ``short_years`` and ``long_years`` of blocks and adds half of a
location/season mean-anomaly correction plus half of a global constant::

    f = (ridge_short(x) + ridge_long(x)) / 2 + (c_local[season, loc] + c_global) / 2
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    InsufficientHistory,
    MissingVariable,
    RangeError,
    ShapeError,
    UnknownLocation,
    UnsupportedOffset,
)
from .features import (
    FeatureMatrix,
    FeatureRow,
    baltic_training_rows,
    build_baltic_rows,
    build_rg48_rows,
    build_seasonal_dataset,
    concat,
    normalize_rows,
    septembers,
)
from .grid import Block, NeighborMap, TimeGrid, calendar_month, extract_blocks
from .models.bayes_ridge import (
    BayesianRidgeConfig,
    BayesianRidgeModel,
    fit_bayesian_ridge,
    predict_bayesian_ridge,
)
from .models.mlp import MlpConfig, MlpModel, fit_mlp_classifier, predict_season


@dataclass(frozen=True, eq=False)
class CorrectionTable:
    """Mean SSTA per (calendar month, location) over a trailing period."""

    values: np.ndarray  # 12 x L
    period: tuple

    def lookup(self, season, location):
        season = np.asarray(season)
        location = np.asarray(location)
        if np.any((season < 1) | (season > 12)):
            raise RangeError("season must lie in 1..12")
        if np.any((location < 0) | (location >= self.values.shape[1])):
            raise UnknownLocation("location outside the correction table")
        out = self.values[season - 1, location]
        if np.any(np.isnan(out)):
            raise UnknownLocation("correction table has no value for a requested location")
        return out


def compute_local_correction(ssta: TimeGrid, trailing_years: int = 10, last_month: int | None = None) -> CorrectionTable:
    """Average of the last ``trailing_years`` occurrences of each calendar month."""
    last = ssta.last_month if last_month is None else last_month
    first = last - 12 * trailing_years + 1
    if first < ssta.start_month or last > ssta.last_month:
        raise InsufficientHistory(
            f"correction needs {trailing_years} years ending at month {last}; grid covers "
            f"{ssta.start_month}..{ssta.last_month}"
        )
    values = ssta.window(first, last + 1)
    cal = calendar_month(np.arange(first, last + 1))
    table = np.full((12, ssta.n_locations), np.nan)
    for m in range(12):
        rows = values[cal == m]
        present = ~np.isnan(rows)
        count = present.sum(axis=0)
        ok = count > 0
        table[m, ok] = np.where(present, rows, 0.0).sum(axis=0)[ok] / count[ok]
    return CorrectionTable(table, (first, last))


def blend(p_short, p_long, c_local, c_global):
    return (p_short + p_long) / 2 + (c_local + c_global) / 2


@dataclass
class CompositeConfig:
    short_years: int = 3
    long_years: int = 9
    trailing_correction_years: int = 10
    c_global: float = 0.1
    target_offset: int = 3
    season_source: str = "calendar"  # or "mlp"
    ridge: BayesianRidgeConfig = field(default_factory=BayesianRidgeConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)


@dataclass(eq=False)
class CompositeModel:
    model_short: BayesianRidgeModel
    model_long: BayesianRidgeModel
    correction: CorrectionTable
    c_global: float = 0.1
    target_offset: int = 3
    season_model: MlpModel | None = None
    location_ids: tuple = ()
    train_last: int = -1

    @property
    def season_source(self) -> str:
        return "calendar" if self.season_model is None else "mlp"


def _rows_for_window(blocks, nmap, first_target, last_target):
    chosen = [
        build_rg48_rows(b, nmap, target=t)
        for b, t in blocks
        if t is not None and first_target <= b.target_month <= last_target
    ]
    if not chosen:
        raise InsufficientHistory(f"no training block targets months {first_target}..{last_target}")
    return concat(chosen)


def fit_composite(
    ssta: TimeGrid,
    nmap: NeighborMap,
    config: CompositeConfig | None = None,
    sst: TimeGrid | None = None,
    train_last: int | None = None,
) -> CompositeModel:
    """Fit both ridge members, the correction table and optionally the season classifier.

    A block belongs to the trailing ``N``-year window when its target month
    falls within the last ``12 N`` months of the training range.
    """
    cfg = config or CompositeConfig()
    last = ssta.last_month if train_last is None else train_last
    ssta = ssta.until(last)
    need_years = max(cfg.long_years + 1, cfg.short_years + 1, cfg.trailing_correction_years)
    if ssta.n_months < 12 * need_years:
        raise InsufficientHistory(f"training span of {ssta.n_months} months is shorter than {need_years} years")
    blocks = extract_blocks(ssta, 12, cfg.target_offset)

    def fit(years):
        fm = _rows_for_window(blocks, nmap, last - 12 * years + 1, last)
        return fit_bayesian_ridge(fm.values, fm.target, cfg.ridge)

    model_long = fit(cfg.long_years)
    model_short = model_long if cfg.short_years == cfg.long_years else fit(cfg.short_years)
    correction = compute_local_correction(ssta, cfg.trailing_correction_years)

    season_model = None
    if cfg.season_source == "mlp":
        if sst is None:
            raise MissingVariable("SST")
        season_model = fit_mlp_classifier(build_seasonal_dataset(sst.until(last)), cfg.mlp)
    elif cfg.season_source != "calendar":
        raise ValueError(f"unknown season source {cfg.season_source!r}")
    return CompositeModel(
        model_short,
        model_long,
        correction,
        cfg.c_global,
        cfg.target_offset,
        season_model,
        ssta.location_ids,
        last,
    )


def predict_composite(model: CompositeModel, row: FeatureRow) -> float:
    if row.layout != "RG48":
        raise ShapeError(f"composite model takes RG48 rows, got {row.layout}")
    p_short = predict_bayesian_ridge(model.model_short, row.values)
    p_long = predict_bayesian_ridge(model.model_long, row.values)
    c_local = model.correction.lookup(row.season, row.location_index)
    return float(blend(p_short, p_long, c_local, model.c_global))


def predict_composite_matrix(model: CompositeModel, fm: FeatureMatrix, corrections: bool = True) -> np.ndarray:
    """Vectorized composite forecast; ``corrections=False`` gives the ridge average alone."""
    if fm.layout != "RG48":
        raise ShapeError(f"composite model takes RG48 rows, got {fm.layout}")
    p_short = predict_bayesian_ridge(model.model_short, fm.values)
    p_long = predict_bayesian_ridge(model.model_long, fm.values)
    if not corrections:
        return (p_short + p_long) / 2
    c_local = model.correction.lookup(fm.season, fm.location_index)
    return blend(p_short, p_long, c_local, model.c_global)


def infer_target_season(model: CompositeModel, last_sst_row) -> int:
    """Season (1..12) of the target, read off the window's last global SST field."""
    if model.season_model is None:
        raise ValueError("composite model has no season classifier")
    cols = model.season_model.columns
    row = np.asarray(last_sst_row, dtype=float)
    row = row if cols is None else row[cols]
    window_month = predict_season(model.season_model, normalize_rows(row)[0])
    return (window_month - 1 + model.target_offset) % 12 + 1


def block_rows(model: CompositeModel, block: Block, nmap: NeighborMap) -> FeatureMatrix:
    fm = build_rg48_rows(block, nmap)
    if model.season_model is not None:
        if "SST" not in block.windows:
            raise MissingVariable("SST")
        fm = fm.with_season(infer_target_season(model, block["SST"][-1]))
    return fm


def composite_predictor(model: CompositeModel, nmap: NeighborMap, corrections: bool = True):
    """Batch block predictor: list of blocks -> (n_blocks, L) forecasts, NaN where a row was skipped."""

    def predict(blocks: Sequence[Block]) -> np.ndarray:
        out = np.full((len(blocks), len(nmap)), np.nan)
        for i, block in enumerate(blocks):
            fm = block_rows(model, block, nmap)
            if len(fm):
                out[i, fm.location_index] = predict_composite_matrix(model, fm, corrections)
        return out

    return predict


def tabular_predictor(predict_rows, coords, layout: str = "UD50", clim=None):
    """Batch block predictor for UD50/UD74 row models.

    ``predict_rows`` maps a feature matrix to one value per row (e.g. a
    fitted GBDT via ``lambda X: predict_gbdt(model, X)``).
    """
    from .features import augment_ud74, build_ud50_rows

    if layout == "UD74" and clim is None:
        raise ValueError("UD74 rows need a climatology table")

    def predict(blocks: Sequence[Block]) -> np.ndarray:
        out = np.full((len(blocks), len(coords)), np.nan)
        for i, block in enumerate(blocks):
            fm = build_ud50_rows(block, coords)
            if layout == "UD74":
                fm = augment_ud74(fm, clim)
            if len(fm):
                out[i, fm.location_index] = predict_rows(fm.values)
        return out

    return predict


@dataclass(eq=False)
class BalticEnsemble:
    members: list  # (trailing years, BayesianRidgeModel)
    location: int

    def predict(self, row: FeatureRow) -> float:
        preds = [predict_bayesian_ridge(m, row.values) for _, m in self.members]
        return float(np.mean(preds))


def fit_baltic(
    ssta: TimeGrid,
    location,
    windows: Sequence[int] = (15, 10),
    ridge: BayesianRidgeConfig | None = None,
    min_septembers: int = 16,
) -> BalticEnsemble:
    """One ridge per trailing window on three-September rows, no corrections."""
    n_sept = len(septembers(ssta))
    if n_sept < min_septembers:
        raise InsufficientHistory(f"{n_sept} Septembers in range, need {min_septembers}")
    fm = baltic_training_rows(ssta, location)
    members = []
    for years in windows:
        keep = fm.target_month > ssta.last_month - 12 * years
        if not keep.any():
            raise InsufficientHistory(f"no September target in the last {years} years")
        sub = fm.take(keep)
        members.append((int(years), fit_bayesian_ridge(sub.values, sub.target, ridge)))
    return BalticEnsemble(members, int(fm.location_index[0]))


def predict_baltic(ensemble: BalticEnsemble, ssta: TimeGrid, anchor_september: int | None = None) -> float:
    """Forecast the September after ``anchor_september`` (default: the last observed one)."""
    if anchor_september is None:
        anchor_september = int(septembers(ssta)[-1])
    return ensemble.predict(build_baltic_rows(ssta, ensemble.location, anchor_september))


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple  # (name, weight) pairs

    def __post_init__(self):
        members = tuple((str(n), float(w)) for n, w in self.members)
        if not members:
            raise ShapeError("an ensemble needs at least one member")
        if not all(np.isfinite(w) for _, w in members):
            raise ValueError("ensemble weights must be finite")
        object.__setattr__(self, "members", members)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members])


def ensemble_predict(spec: EnsembleSpec, predictions):
    """Weighted sum of member predictions; weights are not renormalized."""
    if isinstance(predictions, Mapping):
        try:
            predictions = [predictions[name] for name, _ in spec.members]
        except KeyError as exc:
            raise ShapeError(f"no prediction for member {exc.args[0]!r}") from None
    preds = [np.asarray(p, dtype=float) for p in predictions]
    if len(preds) != len(spec.members):
        raise ShapeError(f"{len(preds)} predictions for {len(spec.members)} members")
    total = sum(w * p for w, p in zip(spec.weights, preds))
    return float(total) if np.ndim(total) == 0 else total


@dataclass
class RecursiveForecast:
    anchor: int
    target_month: int
    values: np.ndarray
    trajectory: dict  # month -> predicted SSTA row
    rounds: int


def recursive_forecast(
    predictor: Callable[[Sequence[Block]], np.ndarray] | Mapping[int, Callable],
    grids: Mapping[str, TimeGrid] | TimeGrid,
    anchor: int | None = None,
    target_offset: int = 9,
    base_offset: int = 3,
    window: int = 12,
) -> RecursiveForecast:
    """Chain a ``base_offset``-ahead block predictor out to ``target_offset`` months.

    With one shared predictor, round r predicts months
    ``anchor + base*r + 1 .. anchor + base*(r+1)`` from the windows ending
    ``base`` months earlier.  Passing a mapping ``{1: p1, ..., base: p_base}``
    of offset-specific predictors instead predicts all months of a round from
    the single window ending at ``anchor + base*r``.

    Predicted SSTA rows are fed back while the other variables keep their last
    observed 12 months.  Observed data after ``anchor`` is never read.
    """
    if isinstance(grids, TimeGrid):
        grids = {grids.variable: grids}
    if "SSTA" not in grids:
        raise MissingVariable("SSTA")
    if target_offset <= 0 or target_offset % base_offset:
        raise UnsupportedOffset(f"offset {target_offset} is not a multiple of {base_offset}")
    per_offset = isinstance(predictor, Mapping)
    if per_offset and sorted(predictor) != list(range(1, base_offset + 1)):
        raise UnsupportedOffset(f"offset-specific predictors must cover offsets 1..{base_offset}")
    T = grids["SSTA"].last_month if anchor is None else anchor
    first = T - window + 1 - (base_offset - 1)
    observed = {name: g.window(first, T + 1) for name, g in grids.items()}
    ssta_rows = {first + k: row for k, row in enumerate(observed["SSTA"])}

    def make_block(end, offset):
        start = end - window + 1
        windows = {"SSTA": np.array([ssta_rows[m] for m in range(start, end + 1)])}
        for name, rows in observed.items():
            if name == "SSTA":
                continue
            e = min(end, T)
            windows[name] = rows[e - window + 1 - first : e + 1 - first]
        return Block(windows, start, offset)

    def run(fn, blocks):
        preds = np.asarray(fn(blocks), dtype=float)
        if preds.shape[0] != len(blocks):
            raise ShapeError(f"predictor returned {preds.shape[0]} rows for {len(blocks)} blocks")
        return preds

    rounds = target_offset // base_offset
    trajectory = {}
    for r in range(rounds):
        if per_offset:
            end = T + base_offset * r
            for k in range(1, base_offset + 1):
                trajectory[end + k] = run(predictor[k], [make_block(end, k)])[0]
            # rows join the history only after the round, so every offset sees the same window
            for k in range(1, base_offset + 1):
                ssta_rows[end + k] = trajectory[end + k]
            continue
        ends = [T + base_offset * r - (base_offset - 1) + k for k in range(base_offset)]
        preds = run(predictor, [make_block(e, base_offset) for e in ends])
        for e, row in zip(ends, preds):
            ssta_rows[e + base_offset] = row
            trajectory[e + base_offset] = row
    target = T + target_offset
    return RecursiveForecast(T, target, trajectory[target], trajectory, rounds)
