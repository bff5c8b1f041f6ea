"""Deterministic ERA5-shaped synthetic grids.

Noise comes from SplitMix64 used as a counter-based generator: draw ``i`` of
a stream is ``mix(key + (i + 1) * 0x9E3779B97F4A7C15)`` with the 64-bit
finalizer below, turned into a uniform in [0, 1) from its top 53 bits and
into a standard normal by Box-Muller (cosine branch, one normal per pair of
uniforms).  Any implementation of those three steps reproduces the grids.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .grid import CoordinateTable, TimeGrid

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
STREAMS = {"SST": 1, "MSLP": 2, "T2M": 3, "LAND": 4}


def splitmix64_mix(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int) -> np.uint64:
    raw = np.array([(seed * 0x100000001B3 + stream) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return splitmix64_mix(raw)[0]


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    counter = np.arange(1, n + 1, dtype=np.uint64)
    z = splitmix64_mix(stream_key(seed, stream) + counter * GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normals(seed: int, stream: int, n: int) -> np.ndarray:
    u = uniforms(seed, stream, 2 * n).reshape(n, 2)
    return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


@dataclass
class SynthConfig:
    n_lat: int = 20
    n_lon: int = 20
    lat0: float = -47.5
    lon0: float = -180.0
    step: float = 5.0
    months: int = 480
    start_month: int = 0
    seed: int = 0
    seasonal_amplitude: float = 3.0
    trend_per_decade: float = 0.2
    osc_period: float = 40.0
    osc_amplitude: float = 0.5
    noise_std: float = 0.3
    land_fraction: float = 0.0

    def validate(self):
        if self.n_lat < 1 or self.n_lon < 1 or not self.step > 0:
            raise ConfigError("lattice needs n_lat, n_lon >= 1 and a positive step")
        top = self.lat0 + (self.n_lat - 1) * self.step
        if self.lat0 < -90 or top > 90:
            raise ConfigError(f"latitudes {self.lat0}..{top} leave [-90, 90]")
        if self.n_lon * self.step > 360 + 1e-9:
            raise ConfigError("longitudes overlap around the globe")
        if self.months < 24:
            raise ConfigError("need at least 24 months")
        if not 0 <= self.land_fraction < 1:
            raise ConfigError("land_fraction must lie in [0, 1)")
        for name in ("seasonal_amplitude", "osc_amplitude", "noise_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.osc_period > 0:
            raise ConfigError("osc_period must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


@dataclass(eq=False)
class SynthData:
    sst: TimeGrid
    mslp: TimeGrid
    t2m: TimeGrid
    coords: CoordinateTable
    land: np.ndarray


def lattice(config: SynthConfig):
    ii, jj = np.meshgrid(np.arange(config.n_lat), np.arange(config.n_lon), indexing="ij")
    lat = config.lat0 + ii.ravel() * config.step
    lon = config.lon0 + jj.ravel() * config.step
    lon = np.mod(lon + 180.0, 360.0) - 180.0
    ids = [f"p{k}" for k in range(len(lat))]
    return CoordinateTable(ids, lat, lon)


def generate(config: SynthConfig | None = None) -> SynthData:
    cfg = config or SynthConfig()
    cfg.validate()
    coords = lattice(cfg)
    lat, lon = coords.latitude, coords.longitude
    L, T = len(coords), cfg.months
    t = np.arange(T)[:, None]
    month = cfg.start_month + t

    hemi = np.where(lat >= 0, 1.0, -1.0)
    base = 28.0 - 24.0 * np.abs(lat) / 90.0
    # peaks in July (north) / January (south) at the equator, lagging by up to
    # two months toward the poles; the lag keeps every calendar month distinct
    lag = 2.0 * np.abs(lat) / 90.0
    seasonal = cfg.seasonal_amplitude * np.sin(2 * np.pi * (month - 3 - lag) / 12.0) * hemi
    trend = cfg.trend_per_decade * t / 120.0
    phase = 2 * np.pi * (lon + 180.0) / 360.0
    osc = cfg.osc_amplitude * np.sin(2 * np.pi * t / cfg.osc_period + phase)
    latent = seasonal + trend + osc

    def noise(name):
        return normals(cfg.seed, STREAMS[name], T * L).reshape(T, L)

    sst = base + latent + cfg.noise_std * noise("SST")
    mslp = 101325.0 - 150.0 * latent + 50.0 * noise("MSLP")
    t2m = base - 1.0 + 1.2 * latent + 0.5 * noise("T2M")

    land = uniforms(cfg.seed, STREAMS["LAND"], L) < cfg.land_fraction
    for a in (sst, mslp, t2m):
        a[:, land] = np.nan

    def grid(name, values):
        return TimeGrid(name, values, cfg.start_month, coords.location_ids)

    return SynthData(grid("SST", sst), grid("MSLP", mslp), grid("T2M", t2m), coords, land)
