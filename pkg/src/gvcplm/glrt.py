"""Generalized likelihood ratio tests for the coefficient functions.

Tests ``H0: alpha_j(.) = 0 for j in S`` against the full model.  The
statistic is ``T = r_K {R(H1) - R(H0)}`` where ``R`` is the quasi-likelihood
at the fitted values of each model; it is calibrated either by a chi-square
with ``df_n`` degrees of freedom or by a parametric bootstrap from the fitted
null model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from scipy import stats

from ._parallel import ordered_map, substream
from .errors import ConvergenceError, GVCPLMError
from .estimator import backfit
from .families import get_family
from .kernels import kernel_constants
from .smoother import DEFAULT_GRID

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10


@dataclass
class GlrtResult:
    t_glr: float
    r_h1: float
    r_h0: float
    df_n: float
    p_asymptotic: float
    p_bootstrap: Optional[float] = None
    bootstrap_stats: Optional[np.ndarray] = field(default=None, repr=False)
    df_fitted: Optional[float] = None
    n_failed: int = 0
    null_x_indices: tuple = ()
    partial_null: bool = False
    warnings: list = field(default_factory=list)

    @property
    def p_value(self):
        """The bootstrap p-value when available, else the asymptotic one."""
        return self.p_asymptotic if self.p_bootstrap is None else self.p_bootstrap


def glrt_df(kernel, p_tested, omega_length, h=None) -> float:
    """``df_n = r_K p |Omega| {K(0) - 0.5 int K^2} / h``."""
    h = kernel.h if h is None else h
    if not h > 0 or not omega_length > 0:
        raise ValueError("need h > 0 and a support of positive length")
    c = kernel_constants(kernel)
    return c.r_K * p_tested * omega_length * (c.k0 - 0.5 * c.nu0) / h


def _check_indices(data, null_x_indices):
    idx = tuple(sorted(set(int(j) for j in null_x_indices)))
    if not idx:
        raise ValueError("null_x_indices must be nonempty")
    if idx[0] < 0 or idx[-1] >= data.p:
        raise ValueError(f"null_x_indices must lie in 0..{data.p - 1}")
    return idx


def fitted_quasi_loglik(data, family, fit):
    eta = fit.linear_predictor(data)
    return float(np.sum(family.quasi(family.linkinv(eta), data.y)))


@dataclass
class GlrtFits:
    t_glr: float
    r_h1: float
    r_h0: float
    alt: object = field(repr=False)
    null: object = field(repr=False)
    null_data: object = field(repr=False)


def glrt_statistic(data, family, kernel, null_x_indices, penalty=None,
                   lambda_policy="gcv", n_grid=DEFAULT_GRID, exact=False) -> GlrtFits:
    """Fit both hypotheses and return the statistic with the two fits.

    ``beta`` is re-estimated under each hypothesis.  With ``penalty=None``
    both fits are unpenalized.
    """
    family = get_family(family)
    idx = _check_indices(data, null_x_indices)
    r_k = kernel_constants(kernel).r_K
    alt = backfit(data, family, kernel, penalty, lambda_policy, n_grid=n_grid, exact=exact)
    null_data = data.drop_x(idx)
    null = backfit(null_data, family, kernel, penalty, lambda_policy,
                   n_grid=n_grid, exact=exact)
    r1 = fitted_quasi_loglik(data, family, alt)
    r0 = fitted_quasi_loglik(null_data, family, null)
    return GlrtFits(r_k * (r1 - r0), r1, r0, alt, null, null_data)


def glrt(data, family, kernel, null_x_indices, penalty=None, lambda_policy="gcv",
         n_grid=DEFAULT_GRID, exact=False, nesting_tol=1e-6) -> GlrtResult:
    """Generalized likelihood ratio test of ``alpha_j = 0`` for ``j`` in
    ``null_x_indices`` (0-based columns of ``x``)."""
    family = get_family(family)
    idx = _check_indices(data, null_x_indices)
    fits = glrt_statistic(data, family, kernel, idx, penalty, lambda_policy, n_grid, exact)
    warnings = []
    if fits.r_h1 < fits.r_h0 - nesting_tol * data.n:
        msg = (f"alternative quasi-likelihood {fits.r_h1:.6g} is below the null's "
               f"{fits.r_h0:.6g}; finite-sample optimization artifact")
        log.warning(msg)
        warnings.append(msg)
    partial_null = len(idx) < data.p
    if partial_null:
        warnings.append("df_n is derived for a null removing every varying component; "
                        "applied here to a partial null")
    df_n = glrt_df(kernel, len(idx), data.omega_length)
    p_asym = asymptotic_pvalue(fits.t_glr, df_n)
    return GlrtResult(fits.t_glr, fits.r_h1, fits.r_h0, df_n, p_asym,
                      null_x_indices=idx, partial_null=partial_null, warnings=warnings)


def asymptotic_pvalue(t_glr, df_n):
    """Upper tail of chi-square(``df_n``); a nonpositive statistic gives 1."""
    return float(stats.chi2.sf(t_glr, df_n)) if t_glr > 0 else 1.0


def bootstrap_pvalue(t_obs, stats_):
    stats_ = np.asarray(stats_, dtype=float)
    return float((1 + np.sum(stats_ >= t_obs)) / (stats_.size + 1))


def null_simulation_scale(data, family, kernel, null_fit):
    """Dispersion for Gaussian parametric draws: deviance / (n - e), with ``e``
    the parametric effective df plus ``|Omega| K(0) / h`` per varying function."""
    if family.name != "gaussian":
        return 1.0
    e = null_fit.effective_df
    if data.has_varying:
        e += data.p * data.omega_length * kernel_constants(kernel).k0 / kernel.h
    return null_fit.deviance / max(data.n - e, 1.0)


def _replicate(b, data, family, kernel, idx, mu0, scale, seed, penalty, lambda_policy,
               n_grid, exact):
    keys = seed if isinstance(seed, tuple) else (seed,)
    rng = substream(*keys, b)
    y_star = family.sample(mu0, rng, scale)
    try:
        return glrt_statistic(data.with_response(y_star), family, kernel, idx, penalty,
                              lambda_policy, n_grid, exact).t_glr
    except GVCPLMError as exc:
        log.info("bootstrap replicate %d failed: %s", b, exc)
        return np.nan


@dataclass
class BootstrapResult:
    p_bootstrap: float
    bootstrap_stats: np.ndarray = field(repr=False)
    df_fitted: float
    t_obs: float
    n_failed: int


def bootstrap_null(data, family, kernel, null_x_indices, B, seed, penalty=None,
                   lambda_policy="gcv", n_grid=DEFAULT_GRID, exact=False, t_obs=None,
                   n_jobs=1) -> BootstrapResult:
    """Parametric bootstrap of the statistic's null distribution.

    Responses are redrawn from the family at the fitted null means; replicate
    ``b`` uses its own random stream derived from ``(seed, b)``; ``seed`` may
    itself be a tuple of integers.  Failed replicates are dropped, and more than
    10% failures abort.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    family = get_family(family)
    idx = _check_indices(data, null_x_indices)
    fits = glrt_statistic(data, family, kernel, idx, penalty, lambda_policy, n_grid, exact)
    if t_obs is None:
        t_obs = fits.t_glr
    mu0 = family.linkinv(fits.null.linear_predictor(fits.null_data))
    scale = null_simulation_scale(fits.null_data, family, kernel, fits.null)
    work = partial(_replicate, data=data, family=family, kernel=kernel, idx=idx,
                   mu0=mu0, scale=scale, seed=seed, penalty=penalty,
                   lambda_policy=lambda_policy, n_grid=n_grid, exact=exact)
    draws = np.array(ordered_map(work, range(B), n_jobs=n_jobs), dtype=float)
    failed = int(np.sum(~np.isfinite(draws)))
    if failed > MAX_FAILURE_RATE * B:
        raise ConvergenceError(f"{failed} of {B} bootstrap replicates failed")
    kept = draws[np.isfinite(draws)]
    return BootstrapResult(bootstrap_pvalue(t_obs, kept), kept, float(np.mean(kept)),
                           float(t_obs), failed)


def glrt_bootstrap(data, family, kernel, null_x_indices, B, seed, penalty=None,
                   lambda_policy="gcv", n_grid=DEFAULT_GRID, exact=False,
                   n_jobs=1) -> GlrtResult:
    """:func:`glrt` with the bootstrap calibration filled in."""
    res = glrt(data, family, kernel, null_x_indices, penalty, lambda_policy, n_grid, exact)
    boot = bootstrap_null(data, family, kernel, null_x_indices, B, seed, penalty,
                          lambda_policy, n_grid, exact, t_obs=res.t_glr, n_jobs=n_jobs)
    res.p_bootstrap = boot.p_bootstrap
    res.bootstrap_stats = boot.bootstrap_stats
    res.df_fitted = boot.df_fitted
    res.n_failed = boot.n_failed
    return res
