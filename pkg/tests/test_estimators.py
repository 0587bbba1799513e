import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from hermval.estimators import ConstantFit, ConstantFitRegressor, IllConditionedError


def _problem(seed, rows=20, cols=3, noise=0.01):
    g = np.random.default_rng(seed)
    X = g.uniform(0.5, 2.0, size=(rows, cols))
    coef = g.normal(size=cols)
    y_err = noise * np.ones(rows)
    y = X @ coef + g.normal(size=rows) * y_err
    return X, y, y_err, coef


def test_recovers_exact_coefficients():
    X, _, _, coef = _problem(0)
    reg = ConstantFitRegressor().fit(X, X @ coef)
    assert np.allclose(reg.coef_, coef, atol=1e-9)
    assert reg.residual_ < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_noisy_coefficients_within_errors(seed):
    X, y, y_err, coef = _problem(seed)
    reg = ConstantFitRegressor().fit(X, y, y_err)
    z = (reg.coef_ - coef) / np.sqrt(np.diag(reg.coef_cov_))
    assert np.abs(z).max() < 5


def test_covariance_calibrated():
    # pulls over many replicates have unit variance
    pulls = []
    for seed in range(300):
        X, y, y_err, coef = _problem(seed + 10_000)
        reg = ConstantFitRegressor().fit(X, y, y_err)
        pulls.append((reg.coef_[0] - coef[0]) / np.sqrt(reg.coef_cov_[0, 0]))
    assert 0.8 < np.std(pulls) < 1.2


def test_design_noise_inflates_errors():
    X, y, y_err, _ = _problem(1)
    a = ConstantFitRegressor().fit(X, y, y_err)
    b = ConstantFitRegressor().fit(X, y, y_err, 0.05 * np.ones_like(X))
    assert np.all(np.diag(b.coef_cov_) > np.diag(a.coef_cov_))


def test_ill_conditioned_raises():
    X = np.ones((6, 2))
    X[:, 1] += 1e-9 * np.arange(6)
    with pytest.raises(IllConditionedError):
        ConstantFitRegressor().fit(X, X[:, 0])
    with pytest.raises(ArithmeticError):
        ConstantFitRegressor().fit(np.c_[np.ones(4), np.zeros(4)], np.ones(4))


def test_too_few_rows():
    with pytest.raises(ValueError):
        ConstantFitRegressor().fit(np.ones((1, 2)), np.ones(1))


def test_sklearn_protocol():
    reg = ConstantFitRegressor(max_condition=10.0)
    assert reg.get_params() == {"max_condition": 10.0, "n_iter": 3, "rel_floor": 1e-6}
    X, y, y_err, _ = _problem(2)
    twin = clone(reg).set_params(n_iter=5)
    assert twin.n_iter == 5 and not hasattr(twin, "coef_")
    twin.fit(X, y, y_err)
    assert twin.predict(X).shape == (20,)
    assert twin.score(X, y) > 0.99
    assert twin.predict_err(X[:2]).shape == (2,)


def test_constant_fit_psd_and_json():
    with pytest.raises(ValueError):
        ConstantFit(["a", "b"], [1.0, 2.0], [[1.0, 2.0], [2.0, 1.0]], 0.0, 1.0)
    X, y, y_err, _ = _problem(3)
    fit = ConstantFitRegressor().fit(X, y, y_err).to_constant_fit([(0, 1), (1, 0), (2, 2)], n=2)
    d = fit.to_json()
    assert d["constants"][0]["index"] == [0, 1]
    assert d["n"] == 2 and "convention" in d
    assert fit.sigma_of((1, 0)) == pytest.approx(fit.sigmas[1])
