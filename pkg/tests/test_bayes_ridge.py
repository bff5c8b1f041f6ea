import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssta_forecast.errors import EmptyTraining, NumericError, ShapeError
from ssta_forecast.models.bayes_ridge import (
    BayesianRidgeConfig,
    fit_bayesian_ridge,
    predict_bayesian_ridge,
)


def closed_form_ridge(X, y, alpha, lam):
    """Direct solve of (alpha X'X + lambda I) w = alpha X'y on centered data."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    A = alpha * Xc.T @ Xc + lam * np.eye(X.shape[1])
    w = np.linalg.solve(A, alpha * Xc.T @ yc)
    return w, y.mean() - X.mean(axis=0) @ w


def test_zero_target():
    X = np.random.default_rng(0).normal(size=(30, 4))
    m = fit_bayesian_ridge(X, np.zeros(30))
    assert np.all(np.abs(m.weights) < 1e-12)
    assert m.intercept == 0.0
    np.testing.assert_array_equal(predict_bayesian_ridge(m, X), 0.0)


def test_noiseless_linear_target_recovers_ols():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 5))
    y = 2.0 * X[:, 0]
    ols = np.linalg.lstsq(np.c_[X, np.ones(200)], y, rcond=None)[0]
    m = fit_bayesian_ridge(X, y)
    assert 1.99 <= m.weights[0] <= 2.01
    assert np.all(np.abs(m.weights[1:]) < 0.01)
    np.testing.assert_allclose(m.weights, ols[:5], atol=0.01)


@pytest.mark.parametrize("seed", range(5))
def test_frozen_precisions_equal_closed_form(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(5, 200), rng.integers(1, 48)
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    alpha, lam = rng.uniform(0.1, 10), rng.uniform(0.1, 10)
    cfg = BayesianRidgeConfig(alpha_init=alpha, lambda_init=lam, update_hyper=False)
    m = fit_bayesian_ridge(X, y, cfg)
    w, b = closed_form_ridge(X, y, alpha, lam)
    np.testing.assert_allclose(m.weights, w, rtol=0, atol=1e-10)
    assert m.intercept == pytest.approx(b, abs=1e-10)
    assert (m.alpha, m.lambda_) == (alpha, lam)


def test_vanishing_hyperpriors_single_iteration():
    """One update with hyperpriors at zero lands on the ridge solution at the updated precisions."""
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 6))
    y = X @ rng.normal(size=6) + 0.3 * rng.normal(size=60)
    cfg = BayesianRidgeConfig(alpha_1=0, alpha_2=0, lambda_1=0, lambda_2=0, max_iter=1, tol=0)
    m = fit_bayesian_ridge(X, y, cfg)
    w, _ = closed_form_ridge(X, y, m.alpha, m.lambda_)
    np.testing.assert_allclose(m.weights, w, atol=1e-10)
    assert m.n_iterations_run == 1


def test_evidence_updates_match_fixed_point():
    """At convergence the precisions satisfy their own update equations."""
    rng = np.random.default_rng(4)
    X = rng.normal(size=(150, 8))
    y = X @ rng.normal(size=8) + 0.5 * rng.normal(size=150)
    cfg = BayesianRidgeConfig(tol=1e-12, max_iter=1000)
    m = fit_bayesian_ridge(X, y, cfg)
    assert m.converged
    Xc, yc = X - X.mean(0), y - y.mean()
    s = np.linalg.eigvalsh(Xc.T @ Xc)
    gamma = np.sum(m.alpha * s / (m.lambda_ + m.alpha * s))
    lam = (gamma + 2e-6) / (m.weights @ m.weights + 2e-6)
    alpha = (150 - gamma + 2e-6) / (np.sum((yc - Xc @ m.weights) ** 2) + 2e-6)
    assert m.lambda_ == pytest.approx(lam, rel=1e-6)
    assert m.alpha == pytest.approx(alpha, rel=1e-6)
    # noise precision close to the true 1 / 0.25
    assert 2.5 < m.alpha < 6.0


def test_predictive_std():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    y = X @ [1.0, -1.0, 0.5] + 0.2 * rng.normal(size=40)
    m = fit_bayesian_ridge(X, y)
    Xt = rng.normal(size=(25, 3)) * 3
    mean, std = predict_bayesian_ridge(m, Xt, return_std=True)
    np.testing.assert_allclose(mean, Xt @ m.weights + m.intercept)
    expected = np.sqrt(1 / m.alpha + np.einsum("ij,jk,ik->i", Xt, m.sigma, Xt))
    np.testing.assert_allclose(std, expected, rtol=1e-10)
    assert np.all(std >= np.sqrt(1 / m.alpha))
    assert predict_bayesian_ridge(m, np.zeros(3)) == pytest.approx(m.intercept)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_prediction_is_affine(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 4))
    m = fit_bayesian_ridge(X, rng.normal(size=30))
    x1, x2 = rng.normal(size=4), rng.normal(size=4)
    p = lambda x: predict_bayesian_ridge(m, x)  # noqa: E731
    p0 = p(np.zeros(4))
    assert p(x1 + x2) - p0 == pytest.approx((p(x1) - p0) + (p(x2) - p0), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 60), st.integers(1, 12), st.floats(1e-3, 1e3))
def test_precisions_stay_positive_and_finite(seed, n, d, scale):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * scale
    y = rng.normal(size=n) * scale
    m = fit_bayesian_ridge(X, y)
    for alpha, lam in m.trace:
        assert np.isfinite(alpha) and np.isfinite(lam) and alpha > 0 and lam > 0


def test_deterministic():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(50, 7)), rng.normal(size=50)
    a, b = fit_bayesian_ridge(X, y), fit_bayesian_ridge(X, y)
    assert a.weights.tobytes() == b.weights.tobytes() and a.alpha == b.alpha


def test_errors():
    with pytest.raises(EmptyTraining):
        fit_bayesian_ridge(np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(NumericError):
        fit_bayesian_ridge(np.array([[np.nan]]), np.array([1.0]))
    m = fit_bayesian_ridge(np.eye(3), np.arange(3.0))
    with pytest.raises(ShapeError):
        predict_bayesian_ridge(m, np.zeros((2, 4)))
