"""One-hidden-layer tanh MLP with a softmax output, trained by mini-batch SGD.

Used to recover the calendar month of a timestamp-free global SST field.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, EmptyTraining, ShapeError


@dataclass
class MlpConfig:
    hidden: int = 64
    epochs: int = 200
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0
    n_classes: int = 12


@dataclass(eq=False)
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"
    loss_trace: list = field(default_factory=list, repr=False)
    columns: np.ndarray | None = field(default=None, repr=False)

    @property
    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: dict, X: np.ndarray):
    hidden = np.tanh(X @ params["W1"] + params["b1"])
    return hidden, softmax(hidden @ params["W2"] + params["b2"])


def loss_and_grads(params: dict, X: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    n = len(X)
    hidden, probs = forward(params, X)
    picked = probs[np.arange(n), labels]
    loss = -np.mean(np.log(np.maximum(picked, 1e-300)))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    d_hidden = (d_logits @ params["W2"].T) * (1.0 - hidden**2)
    grads = {
        "W2": hidden.T @ d_logits,
        "b2": d_logits.sum(axis=0),
        "W1": X.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
    }
    return loss, grads


def init_params(in_dim: int, hidden: int, n_classes: int, rng: np.random.Generator) -> dict:
    return {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, n_classes)),
        "b2": np.zeros(n_classes),
    }


def fit_mlp_classifier(data, config: MlpConfig | None = None, labels=None, callback=None) -> MlpModel:
    """Fit on a SeasonalDataset (or a row matrix plus ``labels``).

    ``callback(epoch, params)`` is invoked after every epoch, mainly for
    inspecting weight trajectories.
    """
    cfg = config or MlpConfig()
    columns = None
    if labels is None:
        X, labels, columns = data.rows, data.labels, data.columns
    else:
        X = data
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if len(X) != len(labels):
        raise ShapeError(f"{len(X)} rows but {len(labels)} labels")
    if len(np.unique(labels)) < 2:
        raise EmptyTraining("classifier needs at least 2 distinct labels")
    if labels.min() < 0 or labels.max() >= cfg.n_classes:
        raise ShapeError(f"labels must lie in 0..{cfg.n_classes - 1}")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(X.shape[1], cfg.hidden, cfg.n_classes, rng)
    trace = []
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(params, X[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            for key in params:
                params[key] = params[key] - cfg.learning_rate * grads[key]
            total += loss * len(idx)
        trace.append(total / n)
        if callback is not None:
            callback(epoch, params)
    return MlpModel(**params, loss_trace=trace, columns=columns)


def predict_proba(model: MlpModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.in_dim:
        raise ShapeError(f"model expects {model.in_dim} inputs, got {X.shape[1]}")
    return forward(model.params, X)[1]


def predict_season(model: MlpModel, rows) -> np.ndarray | int:
    """Calendar month 1..12 of each normalized global row (ties go to the earliest month)."""
    single = np.asarray(rows).ndim == 1
    months = np.argmax(predict_proba(model, rows), axis=1) + 1
    return int(months[0]) if single else months
