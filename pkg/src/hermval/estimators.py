"""Weighted least-squares fitting of linear constants, sklearn style.

The kinematic and Crofton identities are linear in their unknown
constants, with Monte-Carlo noise on both the left-hand sides and the
basis-valuation values that make up the design matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .intrinsic import CONVENTION


class IllConditionedError(ArithmeticError):
    """Design matrix too close to rank deficient."""


@dataclass
class ConstantFit:
    """Fitted constants with covariance and fit diagnostics."""

    names: list
    values: np.ndarray
    covariance: np.ndarray
    residual: float
    condition: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.residual < 0:
            raise ValueError("residual must be non-negative")
        cov = 0.5 * (self.covariance + self.covariance.T)
        if cov.size and np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance is not positive semidefinite")
        self.covariance = cov

    @property
    def sigmas(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def value_of(self, name):
        return float(self.values[self.names.index(name)])

    def sigma_of(self, name):
        return float(self.sigmas[self.names.index(name)])

    def to_json(self):
        return {
            "constants": [{"index": list(n) if isinstance(n, tuple) else n, "value": float(v),
                           "sigma": float(s)} for n, v, s in zip(self.names, self.values, self.sigmas)],
            "covariance": self.covariance.tolist(),
            "residual": self.residual,
            "condition": self.condition,
            "convention": CONVENTION,
            **self.extra,
        }


class ConstantFitRegressor(RegressorMixin, BaseEstimator):
    """Linear fit ``y ~ X @ coef`` weighted by effective variances.

    The effective variance of row ``i`` is
    ``y_err_i^2 + sum_c coef_c^2 X_err_ic^2``, refreshed for ``n_iter``
    passes, so noise in the design (estimated basis valuations) is
    carried into the weights and the coefficient covariance.

    Parameters
    ----------
    max_condition : float
        Raise :class:`IllConditionedError` above this condition number of
        the column-equilibrated (unweighted) design.
    n_iter : int
        Effective-variance passes.
    rel_floor : float
        Smallest relative standard error of a row, so exact rows act as
        tight but finite constraints.
    """

    def __init__(self, max_condition=1e6, n_iter=3, rel_floor=1e-6):
        self.max_condition = max_condition
        self.n_iter = n_iter
        self.rel_floor = rel_floor

    def fit(self, X, y, y_err=None, X_err=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n_rows, n_constants) matching y")
        if X.shape[0] < X.shape[1]:
            raise ValueError(f"{X.shape[0]} rows cannot determine {X.shape[1]} constants")
        y_err = np.zeros_like(y) if y_err is None else np.asarray(y_err, dtype=float)
        X_err = np.zeros_like(X) if X_err is None else np.asarray(X_err, dtype=float)
        # floor keeps exact rows from taking infinite weight
        floor = self.rel_floor * np.maximum(np.abs(y), 1e-300)
        col = np.linalg.norm(X, axis=0)
        if np.any(col == 0):
            raise IllConditionedError("a constant has an all-zero design column")
        cond = float(np.linalg.cond(X / col))
        if cond > self.max_condition:
            raise IllConditionedError(
                f"design condition {cond:.3g} exceeds {self.max_condition:.3g}; "
                "use more diverse bodies")
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        for _ in range(max(1, self.n_iter)):
            var = y_err ** 2 + (X_err ** 2) @ (coef ** 2) + floor ** 2
            w = 1.0 / np.sqrt(var)
            Xw = X * w[:, None]
            scale = np.linalg.norm(Xw, axis=0)
            Xs = Xw / scale
            sol = np.linalg.lstsq(Xs, y * w, rcond=None)[0]
            coef = sol / scale
        cov_s = np.linalg.inv(Xs.T @ Xs)
        self.coef_ = coef
        self.coef_cov_ = cov_s / np.outer(scale, scale)
        self.condition_ = cond
        resid = y - X @ coef
        self.residual_ = float(np.linalg.norm(resid) / max(np.linalg.norm(y), 1e-300))
        self.chi2_ = float(np.sum((resid * w) ** 2))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=float) @ self.coef_

    def predict_err(self, X, X_err=None):
        """Standard error of :meth:`predict` from coefficient and design noise."""
        check_is_fitted(self, "coef_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        var = np.einsum("ij,jk,ik->i", X, self.coef_cov_, X)
        if X_err is not None:
            var = var + (np.atleast_2d(X_err) ** 2) @ (self.coef_ ** 2)
        return np.sqrt(var)

    def to_constant_fit(self, names, **extra):
        check_is_fitted(self, "coef_")
        return ConstantFit(list(names), self.coef_, self.coef_cov_, self.residual_,
                           self.condition_, dict(extra))
