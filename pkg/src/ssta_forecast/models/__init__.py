from .baseline import persistence_forecast, persistence_predictor
from .bayes_ridge import BayesianRidgeConfig, BayesianRidgeModel, fit_bayesian_ridge, predict_bayesian_ridge
from .gbdt import GbdtConfig, GbdtModel, fit_gbdt, predict_gbdt
from .mlp import MlpConfig, MlpModel, fit_mlp_classifier, predict_proba, predict_season

__all__ = [
    "BayesianRidgeConfig",
    "BayesianRidgeModel",
    "GbdtConfig",
    "GbdtModel",
    "MlpConfig",
    "MlpModel",
    "fit_bayesian_ridge",
    "fit_gbdt",
    "fit_mlp_classifier",
    "persistence_forecast",
    "persistence_predictor",
    "predict_bayesian_ridge",
    "predict_gbdt",
    "predict_proba",
    "predict_season",
]
