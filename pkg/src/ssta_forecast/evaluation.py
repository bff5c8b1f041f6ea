"""Skill against persistence, per-year tables and persistence diagnostics.

Skill pooling: RMSE is taken per location over blocks first, then the
per-location values are averaged.  Positions with a missing truth are dropped
from model and baseline alike so the comparison stays paired.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EmptyComparison,
    IncompleteBaseline,
    IncompletePrediction,
    RangeError,
    ShapeError,
    SplitError,
)
from .grid import Block, TimeGrid, format_float, year_of
from .models.baseline import persistence_forecast


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeError(f"shapes differ: {pred.shape} vs {truth.shape}")
    present = ~(np.isnan(pred) | np.isnan(truth))
    if not present.any():
        raise EmptyComparison("no present (prediction, truth) pair")
    diff = pred[present] - truth[present]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class YearlyTable:
    years: np.ndarray
    rmse: dict  # variant -> array aligned with years
    counts: np.ndarray

    def rows(self):
        for i, year in enumerate(self.years):
            yield int(year), {k: float(v[i]) for k, v in self.rmse.items()}


@dataclass
class SkillReport:
    rmse_model: float
    rmse_persistence: float
    skill: float
    per_location_skill: np.ndarray
    per_location_rmse_model: np.ndarray = field(repr=False)
    per_location_rmse_persistence: np.ndarray = field(repr=False)
    per_year_rmse: YearlyTable | None = None
    n_blocks: int = 0


def _as_2d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be (blocks x locations)")
    return a


def _per_location_rmse(pred, truth, present):
    sq = np.where(present, (pred - truth) ** 2, 0.0)
    count = present.sum(axis=0)
    out = np.full(pred.shape[1], np.nan)
    ok = count > 0
    out[ok] = np.sqrt(sq.sum(axis=0)[ok] / count[ok])
    return out, sq.sum(axis=0), count


def _baseline(blocks, baseline, shape):
    if baseline is not None:
        return _as_2d(baseline, "baseline")
    if blocks is None:
        raise IncompleteBaseline("neither blocks nor baseline forecasts were given")
    if len(blocks) != shape[0]:
        raise ShapeError(f"{len(blocks)} blocks for {shape[0]} prediction rows")
    return np.array([persistence_forecast(b) for b in blocks])


def skill_score(
    predictions,
    truths,
    blocks: Sequence[Block] | None = None,
    baseline=None,
    target_months=None,
) -> SkillReport:
    """Persistence RMSE minus model RMSE, averaged over locations (positive = better)."""
    pred = _as_2d(predictions, "predictions")
    truth = _as_2d(truths, "truths")
    if pred.shape != truth.shape:
        raise ShapeError(f"predictions {pred.shape} vs truths {truth.shape}")
    base = _baseline(blocks, baseline, pred.shape)
    if base.shape != truth.shape:
        raise ShapeError(f"baseline {base.shape} vs truths {truth.shape}")
    present = ~np.isnan(truth)
    if np.any(present & np.isnan(base)):
        raise IncompleteBaseline("persistence forecast missing where a truth value exists")
    if np.any(present & np.isnan(pred)):
        raise IncompletePrediction("model forecast missing where a truth value exists")
    if not present.any():
        raise EmptyComparison("no truth value present")
    rm, _, count = _per_location_rmse(pred, truth, present)
    rp, _, _ = _per_location_rmse(base, truth, present)
    ok = count > 0
    per_loc = np.full(len(rm), np.nan)
    per_loc[ok] = rp[ok] - rm[ok]
    mean_m = float(np.mean(rm[ok]))
    mean_p = float(np.mean(rp[ok]))
    yearly = None
    if target_months is not None:
        yearly = yearly_rmse({"model": pred, "persistence": base}, truth, target_months)
    return SkillReport(mean_m, mean_p, mean_p - mean_m, per_loc, rm, rp, yearly, pred.shape[0])


def yearly_rmse(predictions, truths, target_months) -> YearlyTable:
    """RMSE per target calendar year, pooled over blocks and locations."""
    if not isinstance(predictions, Mapping):
        predictions = {"model": predictions}
    truth = _as_2d(truths, "truths")
    months = np.asarray(target_months, dtype=np.int64)
    if len(months) != truth.shape[0]:
        raise ShapeError(f"{len(months)} target months for {truth.shape[0]} blocks")
    years = year_of(months)
    uniq = np.unique(years)
    table = {}
    counts = np.zeros(len(uniq), dtype=np.int64)
    for name, p in predictions.items():
        p = _as_2d(p, name)
        values = np.full(len(uniq), np.nan)
        for i, y in enumerate(uniq):
            sel = years == y
            t = truth[sel]
            present = ~np.isnan(t) & ~np.isnan(p[sel])
            n = present.sum()
            counts[i] = max(counts[i], n)
            if n:
                d = np.where(present, p[sel] - t, 0.0)
                values[i] = np.sqrt((d * d).sum() / n)
        table[name] = values
    return YearlyTable(uniq, table, counts)


def yearly_report_csv(table: YearlyTable, model="model", baseline="persistence") -> str:
    out = io.StringIO()
    out.write("year,rmse_model,rmse_persistence,skill\n")
    for year, row in table.rows():
        m, p = row[model], row[baseline]
        out.write(f"{year},{format_float(m)},{format_float(p)},{format_float(p - m)}\n")
    return out.getvalue()


def persistence_horizon_curve(ssta: TimeGrid, max_n: int) -> np.ndarray:
    """RMSE of predicting value(t) by value(t - N) for N = 1..max_n, pooled over t and locations."""
    v = ssta.values
    T = v.shape[0]
    if max_n < 1 or max_n >= T:
        raise RangeError(f"max_n must lie in 1..{T - 1}")
    out = np.empty(max_n)
    for n in range(1, max_n + 1):
        out[n - 1] = rmse(v[:-n], v[n:])
    return out


def annual_global_mean(grid: TimeGrid):
    """(years, means) over complete calendar years; partial years are dropped."""
    months = grid.months
    years = year_of(months)
    out_years, out_vals = [], []
    for y in np.unique(years):
        sel = years == y
        if sel.sum() < 12:
            continue
        block = grid.values[sel]
        present = ~np.isnan(block)
        if not present.any():
            continue
        out_years.append(int(y))
        out_vals.append(float(block[present].mean()))
    return np.array(out_years, dtype=np.int64), np.array(out_vals)


def shuffle_split(n_blocks: int, seed: int = 0):
    """Shuffle block indices and halve them (public, private)."""
    order = np.random.default_rng(seed).permutation(n_blocks)
    half = n_blocks // 2
    return np.sort(order[:half]), np.sort(order[half:])


def kfold_indices(n: int, k: int = 5, seed: int = 0):
    """(train, validation) index pairs for a shuffled k-fold split."""
    if not 2 <= k <= n:
        raise RangeError(f"k={k} folds need 2 <= k <= n={n}")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    return [(np.sort(np.concatenate(folds[:i] + folds[i + 1 :])), np.sort(f)) for i, f in enumerate(folds)]


def split_score(predictions, truths, public, private, blocks=None, baseline=None):
    """Skill on the public and the private half independently."""
    pred = _as_2d(predictions, "predictions")
    truth = _as_2d(truths, "truths")
    base = _baseline(blocks, baseline, pred.shape)
    public = np.asarray(public, dtype=np.int64)
    private = np.asarray(private, dtype=np.int64)
    n = pred.shape[0]
    both = np.concatenate([public, private])
    if len(np.unique(both)) != len(both):
        raise SplitError("a block is assigned to both subsets (or twice)")
    if len(both) != n or both.min(initial=0) < 0 or both.max(initial=-1) >= n:
        raise SplitError("assignment does not cover every block exactly once")
    if abs(len(public) - len(private)) > 1:
        raise SplitError(f"unbalanced split {len(public)}/{len(private)}")
    return (
        skill_score(pred[public], truth[public], baseline=base[public]),
        skill_score(pred[private], truth[private], baseline=base[private]),
    )
