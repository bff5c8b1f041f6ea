"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments.  Unknown keys are rejected, command
line flags override file values.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .grid import format_month, parse_month

THREADS_ENV = "SSTA_FORECAST_THREADS"


def _month(v):
    return None if v in (None, "") else parse_month(v)


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _ints(v):
    return tuple(int(x) for x in str(v).split(",") if x.strip())


def _strs(v):
    return tuple(x.strip() for x in str(v).split(",") if x.strip())


@dataclass
class RunConfig:
    # paths
    out: str = "run"
    sst_csv: str = ""
    ssta_csv: str = ""
    mslp_csv: str = ""
    t2m_csv: str = ""
    coords_csv: str = ""
    model_file: str = ""
    predictions_csv: str = ""
    # calendar anchors (YYYY-MM)
    start_month: int | None = None
    train_end: int | None = None
    base_start: int | None = None
    base_end: int | None = None
    # model choice
    model: str = "composite"  # composite | gbdt | persistence | baltic | ensemble
    layout: str = "RG48"
    target_offset: int = 3
    short_years: int = 3
    long_years: int = 9
    correction_years: int = 10
    c_global: float = 0.1
    season_source: str = "calendar"
    mlp_hidden: int = 64
    mlp_epochs: int = 200
    mlp_learning_rate: float = 0.1
    gbdt_trees: int = 200
    gbdt_depth: int = 6
    gbdt_learning_rate: float = 0.05
    gbdt_min_leaf: int = 20
    ensemble_models: tuple = ()
    ensemble_weights: tuple = ()
    baltic_location: str = ""
    baltic_windows: tuple = (15, 10)
    forecast_offset: int = 9
    forecast_models: tuple = ()  # one model file per offset 1..target_offset; empty = shared model
    split_seed: int = 0
    # synthetic data
    synth_n_lat: int = 20
    synth_n_lon: int = 20
    synth_lat0: float = -47.5
    synth_lon0: float = -180.0
    synth_step: float = 5.0
    synth_years: int = 40
    synth_seasonal_amplitude: float = 3.0
    synth_trend_per_decade: float = 0.2
    synth_osc_period: float = 40.0
    synth_osc_amplitude: float = 0.5
    synth_noise_std: float = 0.3
    synth_land_fraction: float = 0.0
    # execution
    seed: int = 0
    threads: int = 1

    def canonical(self) -> str:
        """Stable ``key=value`` text of every setting that affects artifact contents."""
        lines = []
        for f in fields(self):
            if f.name in ("threads", "out"):
                continue
            v = getattr(self, f.name)
            if f.name in _MONTH_KEYS and v is not None:
                v = format_month(v)
            elif isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


_MONTH_KEYS = {"start_month", "train_end", "base_start", "base_end"}
_CONVERTERS = {
    "start_month": _month,
    "train_end": _month,
    "base_start": _month,
    "base_end": _month,
    "ensemble_models": _strs,
    "forecast_models": _strs,
    "ensemble_weights": _floats,
    "baltic_windows": _ints,
}


def _convert(name: str, raw: str, default):
    if name in _CONVERTERS:
        return _CONVERTERS[name](raw)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(file_text: str | None = None, overrides: dict | None = None) -> RunConfig:
    raw = parse_config_text(file_text) if file_text else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {}
    for key, value in raw.items():
        if isinstance(value, str):
            try:
                value = _convert(key, value, getattr(defaults, key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        values[key] = value
    if "threads" not in values and os.environ.get(THREADS_ENV):
        try:
            values["threads"] = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from None
    cfg = RunConfig(**values)
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    return cfg
