"""Multifold cross-validation for the bandwidth."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import ordered_map, substream
from .errors import ConvergenceError, GVCPLMError
from .estimator import backfit
from .families import deviance, get_family
from .smoother import DEFAULT_GRID

log = logging.getLogger(__name__)


@dataclass
class BandwidthCV:
    h_star: float
    h_grid: np.ndarray
    cv_scores: np.ndarray
    folds: np.ndarray


def cv_folds(n, K_folds, seed) -> np.ndarray:
    """Fold label of each observation: a seeded shuffle cut into ``K_folds``
    groups whose sizes differ by at most one."""
    if not 2 <= K_folds <= n:
        raise ValueError(f"K_folds must lie in 2..n (got {K_folds} with n = {n})")
    perm = substream(seed, 0).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % K_folds
    return labels


def heldout_deviance(train, test, family, kernel, n_grid=DEFAULT_GRID, exact=False):
    """Fit the unpenalized model on ``train`` and return the deviance on ``test``.

    ``alpha`` at the held-out ``U`` is interpolated from the fitted curves.
    """
    family = get_family(family)
    fit = backfit(train, family, kernel, None, n_grid=n_grid, exact=exact)
    eta = test.z @ fit.beta_hat
    if test.has_varying:
        if fit.alpha_curves is None:
            alpha = np.broadcast_to(fit.alpha_hat[0], (test.n, test.p))
        else:
            alpha = fit.alpha_curves.at(test.u)
        eta = eta + np.einsum("ij,ij->i", test.x, alpha)
    return deviance(family, test.y, family.linkinv(family.clamp(eta)))


def _cv_cell(cell, data, family, kernel, folds, n_grid, exact):
    h, k = cell
    kern = kernel.with_bandwidth(h)
    try:
        return heldout_deviance(data.take(folds != k), data.take(folds == k), family,
                                kern, n_grid, exact)
    except GVCPLMError as exc:
        log.info("CV cell h=%g fold=%d failed: %s", h, k, exc)
        return np.inf


def select_bandwidth_cv(data, family, kernel, h_grid, K_folds=10, seed=0,
                        n_grid=DEFAULT_GRID, exact=False, n_jobs=1) -> BandwidthCV:
    """``CV(h) = sum_k sum_{i in D_k} D(y_i, mu_hat_{-k}(i))`` over ``h_grid``.

    A bandwidth whose fit fails on any fold scores ``inf``.  Ties go to the
    smaller ``h``.
    """
    family = get_family(family)
    h_grid = np.sort(np.asarray(h_grid, dtype=float).ravel())
    if h_grid.size == 0 or np.any(h_grid <= 0):
        raise ValueError("h_grid must be nonempty and positive")
    folds = cv_folds(data.n, int(K_folds), seed)
    cells = [(h, k) for h in h_grid for k in range(int(K_folds))]
    work = partial(_cv_cell, data=data, family=family, kernel=kernel, folds=folds,
                   n_grid=n_grid, exact=exact)
    dev = np.array(ordered_map(work, cells, n_jobs=n_jobs)).reshape(h_grid.size, -1)
    scores = dev.sum(axis=1)
    if not np.any(np.isfinite(scores)):
        raise ConvergenceError("every bandwidth failed on some fold; widen the grid")
    best = int(np.argmin(scores))
    return BandwidthCV(float(h_grid[best]), h_grid, scores, folds)
