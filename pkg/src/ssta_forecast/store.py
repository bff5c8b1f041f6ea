"""Lossless JSON save/load for fitted models.

Every document carries ``format``, ``version``, ``kind`` and ``layout``;
floats are written with Python's shortest round-trip repr, so reloading
reproduces every weight bit for bit.
"""
from __future__ import annotations

import json

import numpy as np

from .composite import BalticEnsemble, CompositeModel, CorrectionTable
from .errors import ConfigError
from .models.bayes_ridge import BayesianRidgeModel
from .models.gbdt import GbdtModel, Tree
from .models.mlp import MlpModel

FORMAT = "ssta-forecast-model"
VERSION = 1


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def _ridge_to(m: BayesianRidgeModel):
    return {
        "weights": _arr(m.weights),
        "intercept": m.intercept,
        "alpha": m.alpha,
        "lambda": m.lambda_,
        "n_iterations_run": m.n_iterations_run,
        "converged": m.converged,
        "eigvals": _arr(m.eigvals),
        "eigvecs": _arr(m.eigvecs),
        "x_mean": _arr(m.x_mean),
    }


def _ridge_from(d) -> BayesianRidgeModel:
    return BayesianRidgeModel(
        np.array(d["weights"], dtype=float),
        d["intercept"],
        d["alpha"],
        d["lambda"],
        d["n_iterations_run"],
        d["converged"],
        np.array(d["eigvals"], dtype=float),
        np.array(d["eigvecs"], dtype=float).reshape(len(d["eigvals"]), -1),
        np.array(d["x_mean"], dtype=float),
    )


def _mlp_to(m: MlpModel):
    return {
        "W1": _arr(m.W1),
        "b1": _arr(m.b1),
        "W2": _arr(m.W2),
        "b2": _arr(m.b2),
        "activation": m.activation,
        "columns": _arr(m.columns),
    }


def _mlp_from(d) -> MlpModel:
    return MlpModel(
        np.array(d["W1"], dtype=float),
        np.array(d["b1"], dtype=float),
        np.array(d["W2"], dtype=float),
        np.array(d["b2"], dtype=float),
        d["activation"],
        columns=None if d["columns"] is None else np.array(d["columns"], dtype=np.int64),
    )


def _gbdt_to(m: GbdtModel):
    return {
        "init": m.init,
        "learning_rate": m.learning_rate,
        "n_features": m.n_features,
        "max_depth": m.max_depth,
        "trees": [
            {
                "feature": _arr(t.feature),
                "threshold": _arr(t.threshold),
                "left": _arr(t.left),
                "right": _arr(t.right),
                "value": _arr(t.value),
            }
            for t in m.trees
        ],
    }


def _gbdt_from(d) -> GbdtModel:
    trees = [
        Tree(
            np.array(t["feature"], dtype=np.int64),
            np.array(t["threshold"], dtype=float),
            np.array(t["left"], dtype=np.int64),
            np.array(t["right"], dtype=np.int64),
            np.array(t["value"], dtype=float),
        )
        for t in d["trees"]
    ]
    return GbdtModel(d["init"], d["learning_rate"], trees, d["n_features"], d["max_depth"])


def _composite_to(m: CompositeModel):
    return {
        "model_short": _ridge_to(m.model_short),
        "model_long": _ridge_to(m.model_long),
        "correction": _arr(m.correction.values),
        "correction_period": list(m.correction.period),
        "c_global": m.c_global,
        "target_offset": m.target_offset,
        "season_model": None if m.season_model is None else _mlp_to(m.season_model),
        "location_ids": list(m.location_ids),
        "train_last": m.train_last,
    }


def _composite_from(d) -> CompositeModel:
    corr = np.array([[np.nan if v is None else v for v in row] for row in d["correction"]], dtype=float)
    return CompositeModel(
        _ridge_from(d["model_short"]),
        _ridge_from(d["model_long"]),
        CorrectionTable(corr, tuple(d["correction_period"])),
        d["c_global"],
        d["target_offset"],
        None if d["season_model"] is None else _mlp_from(d["season_model"]),
        tuple(d["location_ids"]),
        d["train_last"],
    )


def _baltic_to(m: BalticEnsemble):
    return {"location": m.location, "members": [{"years": y, "model": _ridge_to(r)} for y, r in m.members]}


def _baltic_from(d) -> BalticEnsemble:
    return BalticEnsemble([(e["years"], _ridge_from(e["model"])) for e in d["members"]], d["location"])


_KINDS = {
    "bayesian_ridge": (BayesianRidgeModel, _ridge_to, _ridge_from),
    "mlp": (MlpModel, _mlp_to, _mlp_from),
    "gbdt": (GbdtModel, _gbdt_to, _gbdt_from),
    "composite": (CompositeModel, _composite_to, _composite_from),
    "baltic": (BalticEnsemble, _baltic_to, _baltic_from),
}


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    return obj


def dumps_model(model, layout: str | None = None, meta: dict | None = None) -> str:
    for kind, (cls, to, _) in _KINDS.items():
        if isinstance(model, cls):
            doc = {
                "format": FORMAT,
                "version": VERSION,
                "kind": kind,
                "layout": layout,
                "meta": meta or {},
                "model": _nan_to_none(to(model)),
            }
            return json.dumps(doc, sort_keys=True, allow_nan=False) + "\n"
    raise TypeError(f"cannot serialize {type(model).__name__}")


def loads_model(text: str):
    """Return ``(model, layout, meta)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file is not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT:
        raise ConfigError("not a model file")
    if doc.get("version") != VERSION:
        raise ConfigError(f"unsupported model format version {doc.get('version')}")
    try:
        _, _, load = _KINDS[doc["kind"]]
    except KeyError:
        raise ConfigError(f"unknown model kind {doc.get('kind')!r}") from None
    return load(doc["model"]), doc.get("layout"), doc.get("meta", {})
