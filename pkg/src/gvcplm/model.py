"""scikit-learn style estimator wrapping the backfit pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .estimator import backfit
from .families import deviance, get_family
from .kernels import make_kernel
from .penalties import PenaltySpec
from .smoother import DEFAULT_GRID


class GVCPLMRegressor(RegressorMixin, BaseEstimator):
    """Generalized varying-coefficient partially linear model.

    ``g(E[y]) = x^T alpha(u) + z^T beta``, with ``beta`` selected by a
    penalized quasi-likelihood.

    Parameters
    ----------
    n_varying : int
        Number of columns of ``X`` (after the first) that get varying
        coefficients.  The remaining columns form ``z``.
    fit_intercept : bool
        Prepend a constant to ``x``, giving a varying intercept.
    family : str
        ``"gaussian"``, ``"poisson"`` or ``"bernoulli"``.
    bandwidth : float
        Kernel bandwidth ``h``.
    kernel : str
        Kernel name.
    penalty : str or None
        ``"scad"``, ``"l1"``, ``"lq"`` or ``None`` for the unpenalized fit.
    lambda_policy : "gcv" or float
        GCV grid search, or a fixed scalar ``lambda`` (times the SEs).
    scad_a : float
        SCAD shape parameter.
    scaling : str
        Penalty multipliers, see :func:`gvcplm.estimator.penalty_multipliers`.
    n_grid : int
        Grid size for the coefficient curves.
    exact : bool
        Fit ``alpha`` at every observed ``u`` instead of interpolating.
    n_jobs : int
        Worker processes for the lambda path.

    Notes
    -----
    ``X`` is laid out as ``[u, x_1..x_q, z_1..z_d]`` with ``q = n_varying``.
    """

    def __init__(self, n_varying=0, fit_intercept=True, family="gaussian", bandwidth=0.2,
                 kernel="epanechnikov", penalty="scad", lambda_policy="gcv", scad_a=3.7,
                 scaling="information", n_grid=DEFAULT_GRID, exact=False, n_jobs=1):
        self.n_varying = n_varying
        self.fit_intercept = fit_intercept
        self.family = family
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.penalty = penalty
        self.lambda_policy = lambda_policy
        self.scad_a = scad_a
        self.scaling = scaling
        self.n_grid = n_grid
        self.exact = exact
        self.n_jobs = n_jobs

    def _split(self, X):
        q = int(self.n_varying)
        if q < 0 or X.shape[1] < 1 + q:
            raise ValueError(f"X needs a u column and {q} varying columns, "
                             f"got {X.shape[1]} columns")
        u = X[:, 0]
        x = X[:, 1:1 + q]
        if self.fit_intercept:
            x = np.column_stack([np.ones(len(X)), x])
        if x.shape[1] == 0:
            raise ValueError("no varying coefficients: set fit_intercept or n_varying")
        return u, x, X[:, 1 + q:]

    def _dataset(self, X, y):
        u, x, z = self._split(X)
        return Dataset(u, x, z, y)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        family = get_family(self.family)
        data = self._dataset(X, y)
        kern = make_kernel(self.kernel, self.bandwidth)
        penalty = None if self.penalty in (None, "none") else PenaltySpec(self.penalty,
                                                                       a=self.scad_a)
        fit = backfit(data, family, kern, penalty, self.lambda_policy,
                      scaling=self.scaling, n_grid=self.n_grid, exact=self.exact,
                      n_jobs=self.n_jobs)
        self.fit_ = fit
        self.family_ = family
        self.coef_ = fit.beta_hat.copy()
        self.se_ = fit.se.copy()
        self.zero_mask_ = fit.zero_mask.copy()
        self.alpha_curves_ = fit.alpha_curves
        self.n_features_in_ = X.shape[1]
        self.u_range_ = (data.omega_lo, data.omega_hi)
        return self

    def alpha(self, u):
        """Estimated coefficient functions at ``u``, shape ``(len(u), p)``."""
        check_is_fitted(self, "fit_")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.alpha_curves_ is None:
            return np.broadcast_to(self.fit_.alpha_hat[0], (len(u), self.fit_.alpha_hat.shape[1]))
        return self.alpha_curves_.at(u)

    def decision_function(self, X):
        """Linear predictor ``eta``."""
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        u, x, z = self._split(X)
        return np.einsum("ij,ij->i", x, self.alpha(u)) + z @ self.coef_

    def predict(self, X):
        """Fitted mean ``g^{-1}(eta)``."""
        eta = self.decision_function(X)
        return self.family_.linkinv(self.family_.clamp(eta))

    def score(self, X, y, sample_weight=None):
        """Fraction of deviance explained, ``1 - D(y, mu_hat) / D(y, mean(y))``."""
        y = np.asarray(y, dtype=float)
        mu = self.predict(X)
        null = deviance(self.family_, y, np.full_like(y, y.mean()))
        if null == 0:
            return 1.0 if deviance(self.family_, y, mu) == 0 else 0.0
        return 1.0 - deviance(self.family_, y, mu) / null
