"""Bayesian ridge regression fitted by evidence maximization.

Noise precision ``alpha`` and weight precision ``lambda_`` are re-estimated
from the data (MacKay's fixed-point updates with Gamma hyperpriors).  The
eigendecomposition of the centered Gram matrix is computed once so each
iteration costs O(d^2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyTraining, NumericError, ShapeError


@dataclass
class BayesianRidgeConfig:
    alpha_1: float = 1e-6
    alpha_2: float = 1e-6
    lambda_1: float = 1e-6
    lambda_2: float = 1e-6
    max_iter: int = 300
    tol: float = 1e-3
    alpha_init: float | None = None
    lambda_init: float | None = None
    update_hyper: bool = True


@dataclass(eq=False)
class BayesianRidgeModel:
    weights: np.ndarray
    intercept: float
    alpha: float
    lambda_: float
    n_iterations_run: int
    converged: bool
    # posterior covariance = eigvecs @ diag(1 / (alpha * eigvals + lambda_)) @ eigvecs.T
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    x_mean: np.ndarray = field(repr=False)
    trace: list = field(default_factory=list, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.weights)

    @property
    def sigma(self) -> np.ndarray:
        """Posterior weight covariance (dense)."""
        scale = 1.0 / (self.alpha * self.eigvals + self.lambda_)
        return (self.eigvecs * scale) @ self.eigvecs.T


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite value in training data")


def fit_bayesian_ridge(X, y, config: BayesianRidgeConfig | None = None) -> BayesianRidgeModel:
    cfg = config or BayesianRidgeConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n == 0:
        raise EmptyTraining("no training rows")
    if len(y) != n:
        raise ShapeError(f"{n} rows but {len(y)} targets")
    _check_finite(X, y)

    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean

    with np.errstate(over="ignore", invalid="ignore"):
        gram = Xc.T @ Xc
        xty = Xc.T @ yc
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(xty))):
        raise NumericError("Gram matrix overflowed; rescale the inputs")
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.clip(eigvals, 0.0, None)
    proj = eigvecs.T @ xty

    var_y = yc.var()
    alpha = cfg.alpha_init if cfg.alpha_init is not None else (1.0 / var_y if var_y > 0 else 1.0)
    lam = cfg.lambda_init if cfg.lambda_init is not None else 1.0

    def solve(alpha, lam):
        return eigvecs @ (alpha * proj / (alpha * eigvals + lam))

    w = solve(alpha, lam)
    trace = [(alpha, lam)]
    converged = False
    iterations = 0
    if cfg.update_hyper:
        for iterations in range(1, cfg.max_iter + 1):
            gamma = np.sum(alpha * eigvals / (lam + alpha * eigvals))
            sse = np.sum((yc - Xc @ w) ** 2)
            lam = (gamma + 2 * cfg.lambda_1) / (np.sum(w**2) + 2 * cfg.lambda_2)
            alpha = (n - gamma + 2 * cfg.alpha_1) / (sse + 2 * cfg.alpha_2)
            if not (np.isfinite(alpha) and np.isfinite(lam) and alpha > 0 and lam > 0):
                raise NumericError(f"precision update broke down at iteration {iterations}")
            trace.append((alpha, lam))
            w_new = solve(alpha, lam)
            change = np.max(np.abs(w_new - w)) if d else 0.0
            w = w_new
            if change < cfg.tol:
                converged = True
                break
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite weights")

    return BayesianRidgeModel(
        weights=w,
        intercept=float(y_mean - x_mean @ w),
        alpha=float(alpha),
        lambda_=float(lam),
        n_iterations_run=iterations,
        converged=converged,
        eigvals=eigvals,
        eigvecs=eigvecs,
        x_mean=x_mean,
        trace=trace,
    )


def predict_bayesian_ridge(model: BayesianRidgeModel, X, return_std: bool = False):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {X.shape[1]}")
    mean = X @ model.weights + model.intercept
    if not return_std:
        return mean[0] if single else mean
    z = X @ model.eigvecs
    scale = 1.0 / (model.alpha * model.eigvals + model.lambda_)
    std = np.sqrt(1.0 / model.alpha + (z**2 * scale).sum(axis=1))
    if single:
        return mean[0], std[0]
    return mean, std
