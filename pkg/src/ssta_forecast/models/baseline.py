"""Persistence: the last observed anomaly is the forecast at every horizon."""
import numpy as np

from ..grid import Block


def persistence_forecast(block: Block, offset: int | None = None) -> np.ndarray:
    return np.array(block["SSTA"][-1], dtype=float)


def persistence_predictor(blocks):
    """Batch form usable wherever a block predictor is expected."""
    return np.array([persistence_forecast(b) for b in blocks])
