"""Command line entry point: ``ssta-forecast <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure.  Failures print one ``error code=... kind=... reason=...`` line on
stderr.  Each subcommand computes all of its artifacts before writing any of
them, and every file is written to a temporary name and renamed into place.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import charts
from .composite import (
    CompositeConfig,
    EnsembleSpec,
    composite_predictor,
    ensemble_predict,
    fit_baltic,
    fit_composite,
    predict_baltic,
    recursive_forecast,
    tabular_predictor,
)
from .config import RunConfig, build_config
from .errors import ConfigError, DataError, NumericFailure, SSTAError
from .evaluation import (
    annual_global_mean,
    persistence_horizon_curve,
    shuffle_split,
    skill_score,
    split_score,
    yearly_report_csv,
    yearly_rmse,
)
from .features import (
    augment_ud74,
    baltic_training_rows,
    build_rg48_rows,
    build_ud50_rows,
    concat,
    feature_matrix_csv,
)
from .grid import (
    TimeGrid,
    anomalies_from_sst,
    build_neighbor_map,
    compute_monthly_climatology,
    extract_blocks,
    format_month,
    parse_coordinate_csv,
    parse_value_csv,
    serialize_coordinate_csv,
    serialize_value_csv,
)
from .models.baseline import persistence_predictor
from .models.bayes_ridge import BayesianRidgeConfig
from .models.gbdt import GbdtConfig, fit_gbdt, predict_gbdt
from .models.mlp import MlpConfig
from .store import dumps_model, loads_model
from .synthgen import SynthConfig, generate

log = logging.getLogger("ssta_forecast")

COMMANDS = ("synth", "climatology", "features", "train", "predict", "forecast9", "evaluate", "report")
DEFAULT_FILES = {
    "sst_csv": "sst.csv",
    "ssta_csv": "ssta.csv",
    "mslp_csv": "mslp.csv",
    "t2m_csv": "t2m.csv",
    "coords_csv": "coords.csv",
    "model_file": "model.json",
    "predictions_csv": "predictions.csv",
}


class UsageError(SSTAError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def commit(out: Path, artifacts: dict):
    for name, text in artifacts.items():
        write_atomic(out / name, text)
        log.info("wrote %s", out / name)


class Run:
    """Resolved config plus lazily loaded inputs."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self._grids = {}

    def path(self, key: str) -> Path:
        value = getattr(self.cfg, key)
        return Path(value) if value else self.out / DEFAULT_FILES[key]

    def require_start(self) -> int:
        if self.cfg.start_month is None:
            raise UsageError("--start-month (YYYY-MM) is required: value files carry no timestamps")
        return self.cfg.start_month

    def _read(self, key: str) -> str:
        p = self.path(key)
        if not p.is_file():
            raise ConfigError(f"missing input file {p}")
        return p.read_text(encoding="utf-8")

    def has(self, key: str) -> bool:
        return self.path(key).is_file()

    def raw_grid(self, key: str, variable: str) -> TimeGrid:
        return parse_value_csv(self._read(key), variable, self.require_start())

    def grids(self) -> dict:
        """Every available variable, aligned, with land (all-missing SSTA) columns dropped."""
        if self._grids:
            return self._grids
        ssta = self.raw_grid("ssta_csv", "SSTA")
        keep = ~ssta.absent
        grids = {"SSTA": ssta.select(keep)}
        for key, var in (("sst_csv", "SST"), ("mslp_csv", "MSLP"), ("t2m_csv", "T2M")):
            if self.has(key):
                g = self.raw_grid(key, var)
                if g.location_ids != ssta.location_ids or g.n_months != ssta.n_months:
                    raise DataError(f"{var} grid is not aligned with the SSTA grid")
                grids[var] = g.select(keep)
        self._grids = grids
        if (~keep).any():
            log.info("dropped %d absent locations", int((~keep).sum()))
        return grids

    def coords(self):
        table = parse_coordinate_csv(self._read("coords_csv"))
        return table.aligned_to(self.grids()["SSTA"].location_ids)

    def train_end(self) -> int:
        ssta = self.grids()["SSTA"]
        if self.cfg.train_end is not None:
            return self.cfg.train_end
        return ssta.last_month - 96

    def ridge(self):
        return BayesianRidgeConfig()

    def composite_config(self) -> CompositeConfig:
        c = self.cfg
        return CompositeConfig(
            short_years=c.short_years,
            long_years=c.long_years,
            trailing_correction_years=c.correction_years,
            c_global=c.c_global,
            target_offset=c.target_offset,
            season_source=c.season_source,
            ridge=self.ridge(),
            mlp=MlpConfig(hidden=c.mlp_hidden, epochs=c.mlp_epochs, learning_rate=c.mlp_learning_rate, seed=c.seed),
        )

    def base_period(self, grid: TimeGrid):
        first = self.cfg.base_start if self.cfg.base_start is not None else grid.start_month
        last = self.cfg.base_end if self.cfg.base_end is not None else grid.last_month
        return first, last

    def training_blocks(self):
        grids = self.grids()
        end = self.train_end()
        return [
            (b, t)
            for b, t in extract_blocks(grids, 12, self.cfg.target_offset)
            if t is not None and b.target_month <= end
        ]

    def test_blocks(self):
        end = self.train_end()
        return [
            b
            for b, _ in extract_blocks(self.grids(), 12, self.cfg.target_offset, all_windows=True)
            if b.window_start > end
        ]

    def load_model(self, path: Path | None = None):
        p = path or self.path("model_file")
        if not p.is_file():
            raise ConfigError(f"missing model file {p}")
        text = p.read_text(encoding="utf-8")
        model, layout, meta = loads_model(text)
        ids = meta.get("location_ids")
        if ids is not None and tuple(ids) != self.grids()["SSTA"].location_ids:
            raise DataError("model was trained on a different set of locations")
        return model, layout, meta, hashlib.sha256(text.encode()).hexdigest()[:16]

    def predictor(self):
        """(batch block predictor, model id)."""
        kind = self.cfg.model
        if kind == "persistence":
            return persistence_predictor, "persistence"
        if kind == "ensemble":
            return self._ensemble_predictor()
        model, layout, meta, model_id = self.load_model()
        return self._predictor_for(model, layout, meta), model_id

    def _predictor_for(self, model, layout, meta):
        from .composite import BalticEnsemble, CompositeModel
        from .models.gbdt import GbdtModel

        if isinstance(model, CompositeModel):
            return composite_predictor(model, build_neighbor_map(self.coords()))
        if isinstance(model, GbdtModel):
            clim = None
            if layout == "UD74":
                clim = compute_monthly_climatology(self.grids()["SSTA"], tuple(meta["clim_period"]))
            return tabular_predictor(lambda X: predict_gbdt(model, X), self.coords(), layout, clim)
        if isinstance(model, BalticEnsemble):
            raise ConfigError("the Baltic ensemble forecasts Septembers only; use forecast9")
        raise ConfigError(f"model kind {type(model).__name__} cannot forecast blocks")

    def offset_predictors(self):
        """({offset: predictor}, id) from ``forecast_models``, one file per offset 1..target_offset."""
        by_offset, ids = {}, []
        for f in self.cfg.forecast_models:
            model, layout, meta, model_id = self.load_model(Path(f))
            k = meta.get("target_offset")
            if k is None or k in by_offset:
                raise ConfigError(f"{f}: missing or repeated target_offset in model metadata")
            by_offset[int(k)] = self._predictor_for(model, layout, meta)
            ids.append(model_id)
        return by_offset, hashlib.sha256(",".join(ids).encode()).hexdigest()[:16]

    def _ensemble_predictor(self):
        files = self.cfg.ensemble_models
        weights = self.cfg.ensemble_weights
        if not files or len(files) != len(weights):
            raise ConfigError("ensemble_models and ensemble_weights must be non-empty and equally long")
        members, ids = [], []
        for f in files:
            model, layout, meta, model_id = self.load_model(Path(f))
            members.append(self._predictor_for(model, layout, meta))
            ids.append(model_id)
        spec = EnsembleSpec(tuple(zip(files, weights)))

        def predict(blocks):
            return ensemble_predict(spec, [m(blocks) for m in members])

        return predict, hashlib.sha256(",".join(ids + [repr(weights)]).encode()).hexdigest()[:16]

    def predict_blocks(self, predictor, blocks):
        """Run a batch predictor over blocks, fanned out over ``threads`` workers, order preserved."""
        if not blocks:
            return np.empty((0, self.grids()["SSTA"].n_locations))
        n = self.cfg.threads
        if n == 1 or len(blocks) < 2:
            return np.asarray(predictor(blocks), dtype=float)
        chunks = np.array_split(np.arange(len(blocks)), min(n, len(blocks)))
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(lambda idx: np.asarray(predictor([blocks[i] for i in idx])), chunks))
        return np.vstack(parts)


def _grid_csv(values, start_month, location_ids, variable="SSTA") -> str:
    return serialize_value_csv(TimeGrid(variable, values, start_month, location_ids))


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_synth(run: Run):
    c = run.cfg
    start = run.require_start()
    scfg = SynthConfig(
        n_lat=c.synth_n_lat,
        n_lon=c.synth_n_lon,
        lat0=c.synth_lat0,
        lon0=c.synth_lon0,
        step=c.synth_step,
        months=12 * c.synth_years,
        start_month=start,
        seed=c.seed,
        seasonal_amplitude=c.synth_seasonal_amplitude,
        trend_per_decade=c.synth_trend_per_decade,
        osc_period=c.synth_osc_period,
        osc_amplitude=c.synth_osc_amplitude,
        noise_std=c.synth_noise_std,
        land_fraction=c.synth_land_fraction,
    )
    data = generate(scfg)
    clim = compute_monthly_climatology(data.sst, run.base_period(data.sst))
    ssta = anomalies_from_sst(data.sst, clim)
    manifest = {
        "generator": json.loads(scfg.to_json()),
        "start_month": format_month(start),
        "base_period": [format_month(m) for m in clim.base_period],
        "land_locations": int(data.land.sum()),
    }
    commit(
        run.out,
        {
            "sst.csv": serialize_value_csv(data.sst),
            "mslp.csv": serialize_value_csv(data.mslp),
            "t2m.csv": serialize_value_csv(data.t2m),
            "ssta.csv": serialize_value_csv(ssta),
            "coords.csv": serialize_coordinate_csv(data.coords),
            "manifest.json": _json(manifest),
        },
    )


def cmd_climatology(run: Run):
    sst = run.raw_grid("sst_csv", "SST")
    clim = compute_monthly_climatology(sst, run.base_period(sst))
    ssta = anomalies_from_sst(sst, clim)
    commit(
        run.out,
        {
            "climatology_avg.csv": _grid_csv(clim.avg, 0, sst.location_ids, "SST"),
            "climatology_std.csv": _grid_csv(clim.std, 0, sst.location_ids, "SST"),
            "ssta.csv": serialize_value_csv(ssta),
        },
    )


def _training_features(run: Run, layout: str):
    blocks = run.training_blocks()
    if not blocks:
        raise DataError("no training block ends before train_end")
    if layout == "RG48":
        nmap = build_neighbor_map(run.coords())
        return concat(build_rg48_rows(b, nmap, target=t) for b, t in blocks), None
    if layout in ("UD50", "UD74"):
        coords = run.coords()
        fm = concat(build_ud50_rows(b, coords, target=t) for b, t in blocks)
        if layout == "UD50":
            return fm, None
        ssta = run.grids()["SSTA"]
        period = (ssta.start_month, run.train_end())
        return augment_ud74(fm, compute_monthly_climatology(ssta, period)), period
    if layout == "BALTIC3":
        loc = run.cfg.baltic_location or run.grids()["SSTA"].location_ids[0]
        return baltic_training_rows(run.grids()["SSTA"].until(run.train_end()), loc), None
    raise ConfigError(f"unknown layout {layout!r}")


def cmd_features(run: Run):
    fm, _ = _training_features(run, run.cfg.layout)
    log.info("%d %s rows, %d skipped", len(fm), fm.layout, fm.skipped)
    commit(run.out, {f"features_{fm.layout}.csv": feature_matrix_csv(fm)})


def cmd_train(run: Run):
    c = run.cfg
    ssta = run.grids()["SSTA"]
    end = run.train_end()
    meta = {
        "location_ids": list(ssta.location_ids),
        "config_hash": c.digest(),
        "train_end": format_month(end),
        "target_offset": c.target_offset,
    }
    if c.model == "composite":
        sst = run.grids().get("SST")
        model = fit_composite(ssta, build_neighbor_map(run.coords()), run.composite_config(), sst=sst, train_last=end)
        layout = "RG48"
        log.info(
            "ridge short: alpha=%.4g lambda=%.4g iters=%d; long: alpha=%.4g lambda=%.4g iters=%d",
            model.model_short.alpha,
            model.model_short.lambda_,
            model.model_short.n_iterations_run,
            model.model_long.alpha,
            model.model_long.lambda_,
            model.model_long.n_iterations_run,
        )
    elif c.model == "gbdt":
        layout = c.layout if c.layout in ("UD50", "UD74") else "UD50"
        fm, period = _training_features(run, layout)
        if period is not None:
            meta["clim_period"] = list(period)
        gcfg = GbdtConfig(c.gbdt_trees, c.gbdt_depth, c.gbdt_learning_rate, c.gbdt_min_leaf, seed=c.seed)
        model = fit_gbdt(fm.values, fm.target, gcfg)
        log.info("gbdt: %d trees on %d rows", len(model.trees), len(fm))
    elif c.model == "baltic":
        layout = "BALTIC3"
        loc = c.baltic_location or ssta.location_ids[0]
        model = fit_baltic(ssta.until(end), loc, c.baltic_windows, run.ridge())
    else:
        raise ConfigError(f"model {c.model!r} has nothing to train")
    target = run.path("model_file")
    commit(target.parent, {target.name: dumps_model(model, layout, meta)})


def cmd_predict(run: Run):
    predictor, model_id = run.predictor()
    blocks = run.test_blocks()
    if not blocks:
        raise DataError("no input window starts after train_end")
    preds = run.predict_blocks(predictor, blocks)
    ssta = run.grids()["SSTA"]
    meta = {
        "model_id": model_id,
        "config_hash": run.cfg.digest(),
        "window_starts": [format_month(b.window_start) for b in blocks],
        "target_months": [format_month(b.target_month) for b in blocks],
        "target_offset": run.cfg.target_offset,
    }
    commit(
        run.out,
        {
            "predictions.csv": _grid_csv(preds, blocks[0].target_month, ssta.location_ids),
            "predictions.meta.json": _json(meta),
        },
    )


def cmd_forecast9(run: Run):
    grids = run.grids()
    ssta = grids["SSTA"]
    anchor = ssta.last_month
    offset = run.cfg.forecast_offset
    if run.cfg.model == "baltic":
        model, _, meta, model_id = run.load_model()
        value = predict_baltic(model, ssta.until(anchor))
        loc_id = ssta.location_ids[model.location]
        from .features import septembers

        target = int(septembers(ssta.until(anchor))[-1]) + 12
        csv = _grid_csv(np.array([[value]]), target, [loc_id])
        meta = {"model_id": model_id, "anchor": format_month(anchor), "target_month": format_month(target)}
    else:
        if run.cfg.forecast_models:
            predictor, model_id = run.offset_predictors()
        else:
            predictor, model_id = run.predictor()
        result = recursive_forecast(predictor, grids, anchor, offset, run.cfg.target_offset)
        months = sorted(result.trajectory)
        values = np.array([result.trajectory[m] for m in months])
        csv = _grid_csv(values, months[0], ssta.location_ids)
        meta = {
            "model_id": model_id,
            "anchor": format_month(anchor),
            "target_month": format_month(result.target_month),
            "rounds": result.rounds,
        }
    meta["config_hash"] = run.cfg.digest()
    commit(run.out, {"forecast.csv": csv, "forecast.meta.json": _json(meta)})


def _load_predictions(run: Run):
    p = run.path("predictions_csv")
    meta_path = p.with_name(p.stem + ".meta.json")
    if not p.is_file() or not meta_path.is_file():
        raise ConfigError(f"missing predictions {p} or its sidecar {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    from .grid import parse_month

    targets = [parse_month(m) for m in meta["target_months"]]
    starts = [parse_month(m) for m in meta["window_starts"]]
    preds = parse_value_csv(p.read_text(encoding="utf-8"), "SSTA", targets[0] if targets else 0)
    if preds.n_months != len(targets):
        raise DataError("predictions and sidecar disagree on the number of rows")
    return preds, np.array(starts), np.array(targets)


def _paired_truths(run: Run, preds: TimeGrid, starts, targets):
    ssta = run.grids()["SSTA"]
    if preds.location_ids != ssta.location_ids:
        raise DataError("prediction columns do not match the SSTA grid")
    have = (targets <= ssta.last_month) & (targets >= ssta.start_month)
    if not have.any():
        raise DataError("no prediction target is observed in the SSTA grid")
    truth = np.array([ssta.row(int(t)) for t in targets[have]])
    base = np.array([ssta.row(int(s) + 11) for s in starts[have]])
    return preds.values[have], truth, base, targets[have]


def cmd_evaluate(run: Run):
    preds, starts, targets = _load_predictions(run)
    pred, truth, base, months = _paired_truths(run, preds, starts, targets)
    report = skill_score(pred, truth, baseline=base, target_months=months)
    summary = {
        "rmse_model": report.rmse_model,
        "rmse_persistence": report.rmse_persistence,
        "skill": report.skill,
        "n_blocks": report.n_blocks,
    }
    if len(pred) >= 2:
        public, private = shuffle_split(len(pred), run.cfg.split_seed)
        pub, priv = split_score(pred, truth, public, private, baseline=base)
        summary.update(public_skill=pub.skill, private_skill=priv.skill, public_blocks=len(public), private_blocks=len(private))
    log.info("skill %.6f (model %.6f, persistence %.6f)", report.skill, report.rmse_model, report.rmse_persistence)
    commit(run.out, {"report.csv": yearly_report_csv(report.per_year_rmse), "summary.json": _json(summary)})


def cmd_report(run: Run):
    grids = run.grids()
    series = grids.get("SST", grids["SSTA"])
    years, annual = annual_global_mean(series)
    max_n = min(24, series.n_months - 1)
    curve_sst = persistence_horizon_curve(series, max_n)
    curve_ssta = persistence_horizon_curve(grids["SSTA"], max_n)
    lines = ["n,rmse_" + series.variable.lower() + ",rmse_ssta"]
    lines += [f"{n},{curve_sst[n - 1]!r},{curve_ssta[n - 1]!r}" for n in range(1, max_n + 1)]
    artifacts = {
        "annual_mean.csv": "year,mean\n" + "".join(f"{y},{v!r}\n" for y, v in zip(years, annual)),
        "horizon_curve.csv": "\n".join(lines) + "\n",
        "diagnostics.svg": charts.diagnostics_svg(years, annual, curve_sst),
    }
    if run.cfg.model != "persistence" and run.path("model_file").is_file():
        from .composite import CompositeModel

        model, layout, meta, _ = run.load_model()
        blocks = run.test_blocks()
        blocks = [b for b in blocks if b.target_month <= grids["SSTA"].last_month]
        if isinstance(model, CompositeModel) and blocks:
            nmap = build_neighbor_map(run.coords())
            full = run.predict_blocks(composite_predictor(model, nmap), blocks)
            bare = run.predict_blocks(composite_predictor(model, nmap, corrections=False), blocks)
            ssta = grids["SSTA"]
            truth = np.array([ssta.row(b.target_month) for b in blocks])
            base = persistence_predictor(blocks)
            table = yearly_rmse(
                {"model": full, "model_uncorrected": bare, "persistence": base},
                truth,
                [b.target_month for b in blocks],
            )
            rows = ["year,rmse_model,rmse_model_uncorrected,rmse_persistence"]
            for year, r in table.rows():
                rows.append(f"{year},{r['model']!r},{r['model_uncorrected']!r},{r['persistence']!r}")
            artifacts["yearly_rmse.csv"] = "\n".join(rows) + "\n"
            artifacts["yearly.svg"] = charts.yearly_svg(table)
    commit(run.out, artifacts)


HANDLERS = {
    "synth": cmd_synth,
    "climatology": cmd_climatology,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "forecast9": cmd_forecast9,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssta-forecast", description="Tabular SSTA forecasting pipeline.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--start-month", help="month of the first CSV row, YYYY-MM")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key"
    )
    return parser


def run(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s %(message)s"
    )
    try:
        args = make_parser().parse_args(argv)
        text = None
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        overrides = {"start_month": args.start_month, "out": args.out, "seed": args.seed, "threads": args.threads}
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        overrides = {k: (str(v) if v is not None else None) for k, v in overrides.items()}
        cfg = build_config(text, overrides)
        HANDLERS[args.command](Run(cfg))
        return 0
    except UsageError as exc:
        return _fail(1, exc)
    except (DataError, OSError, json.JSONDecodeError) as exc:
        return _fail(2, exc)
    except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(3, exc)


def _fail(code: int, exc: Exception) -> int:
    reason = str(exc).replace("\n", " ")
    print(f"error code={code} kind={type(exc).__name__} reason={reason}", file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
