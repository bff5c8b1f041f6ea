"""Sea surface temperature anomaly forecasting on gridded monthly data."""

from .composite import (
    CompositeConfig,
    CompositeModel,
    EnsembleSpec,
    compute_local_correction,
    ensemble_predict,
    fit_baltic,
    fit_composite,
    predict_composite,
    recursive_forecast,
)
from .evaluation import persistence_horizon_curve, rmse, skill_score, yearly_rmse
from .grid import (
    TimeGrid,
    anomalies_from_sst,
    build_neighbor_map,
    compute_monthly_climatology,
    extract_blocks,
    parse_coordinate_csv,
    parse_value_csv,
)

__all__ = [
    "CompositeConfig",
    "CompositeModel",
    "EnsembleSpec",
    "TimeGrid",
    "anomalies_from_sst",
    "build_neighbor_map",
    "compute_local_correction",
    "compute_monthly_climatology",
    "ensemble_predict",
    "extract_blocks",
    "fit_baltic",
    "fit_composite",
    "parse_coordinate_csv",
    "parse_value_csv",
    "persistence_horizon_curve",
    "predict_composite",
    "recursive_forecast",
    "rmse",
    "skill_score",
    "yearly_rmse",
]
__version__ = "0.1.0"
