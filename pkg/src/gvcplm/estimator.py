"""Estimation of the parametric part and the one-step backfit pipeline.

1. ``alpha`` is estimated locally, jointly with a local ``beta``.
2. ``beta`` maximizes the (penalized) global quasi-likelihood with that
   local estimate plugged in as an offset.  Nonsmooth penalties are handled
   by local quadratic approximation (LQA) inside Newton-Raphson.
3. ``alpha`` is re-estimated locally with ``beta`` fixed at its estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from ._parallel import ordered_map
from .errors import (ConvergenceError, DegenerateFitError, GVCPLMError,
                     SingularMatrixError, UnsupportedPenaltyError)
from .families import deviance, get_family
from .glm import MAX_HALVINGS, fit_glm, loglik_parts, objective_tol, solve_pd
from .penalties import PenaltySpec, penalty_deriv
from .smoother import DEFAULT_GRID, CoefficientCurves, alpha_at_observations

log = logging.getLogger(__name__)

LQA_MAX_ITER = 100
LQA_TOL = 1e-8


@dataclass
class UnpenalizedFit:
    beta_u: np.ndarray
    se_u: np.ndarray
    cov_u: np.ndarray
    alpha_tilde: np.ndarray = field(repr=False)
    alpha_tilde_curves: Optional[CoefficientCurves] = field(repr=False)
    loglik: float
    iterations: int
    converged: bool


@dataclass
class SemiFit:
    """A fitted model.  ``se`` is NaN for coefficients set to zero."""

    beta_hat: np.ndarray
    zero_mask: np.ndarray
    se: np.ndarray
    alpha_curves: Optional[CoefficientCurves]
    lambda_used: np.ndarray
    effective_df: float
    gcv: float
    deviance: float
    iterations: int
    converged: bool
    penalty: PenaltySpec = field(default_factory=lambda: PenaltySpec("none"))
    loglik: float = np.nan
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    exempt: Optional[np.ndarray] = field(default=None, repr=False)
    alpha_tilde: Optional[np.ndarray] = field(default=None, repr=False)
    alpha_hat: Optional[np.ndarray] = field(default=None, repr=False)
    lambda_path: Optional[list] = field(default=None, repr=False)
    lambda_scalar: Optional[float] = None
    penalty_scale: Optional[np.ndarray] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def active(self):
        return ~self.zero_mask

    def linear_predictor(self, data):
        return varying_part(data, self.alpha_hat) + data.z @ self.beta_hat


def varying_part(data, alpha_obs):
    if alpha_obs is None or not data.has_varying:
        return np.zeros(data.n)
    return np.einsum("ij,ij->i", data.x, alpha_obs)


def estimate_alpha_tilde(data, family, kernel, n_grid=DEFAULT_GRID, exact=False):
    """Step 1: local joint fit of ``(a, b, beta)``; returns ``alpha`` at each ``U_i``."""
    if not data.has_varying:
        return np.zeros((data.n, data.p)), None
    return alpha_at_observations(data, family, kernel, joint=True,
                                 n_grid=n_grid, exact=exact)


def _penalty_weights(penalty, lam, beta, exempt, scale=None):
    """Diagonal of ``Sigma_lambda``: ``c_j p'(|beta_j|)/|beta_j|`` (0 where exempt).

    ``c_j`` is the per-coefficient penalty multiplier (1 unless given).
    """
    b = np.abs(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(b > 0, penalty_deriv(penalty, b, lam) / b, 0.0)
    if scale is not None:
        w = w * scale
    w = np.where(exempt, 0.0, w)
    return np.nan_to_num(w, nan=0.0, posinf=0.0)


def _lqa_loop(family, Z, y, offset, penalty, lam, beta, frozen, exempt, scale,
              max_iter, tol):
    n, d = Z.shape
    eps = penalty.zero_threshold
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        newly = ~frozen & ~exempt & (np.abs(beta) <= eps)
        frozen |= newly
        beta[frozen] = 0.0
        act = ~frozen
        if not act.any():
            converged = True
            break
        Za = Z[:, act]
        ll, grad, hess = loglik_parts(family, Za, y, offset, beta[act])
        w = _penalty_weights(penalty, lam[act], beta[act], exempt[act], scale[act])
        negM = -hess + n * np.diag(w)
        rhs = grad - n * w * beta[act]
        step, _ = solve_pd(negM, rhs)

        def surrogate(b):
            eta = offset + Za @ b
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                v = np.sum(family.quasi(family.linkinv(eta), y))
            v = v - 0.5 * n * np.sum(w * b * b)
            return v if np.isfinite(v) else -np.inf

        cur = ll - 0.5 * n * np.sum(w * beta[act] ** 2)
        for _ in range(MAX_HALVINGS + 1):
            cand = beta[act] + step
            if surrogate(cand) >= cur - objective_tol(cur):
                break
            step = 0.5 * step
        else:
            step = np.zeros_like(step)
            cand = beta[act]
        beta[act] = cand
        if not newly.any() and np.max(np.abs(step)) < tol:
            converged = True
            break
    # a last step may have landed inside the threshold
    late = ~frozen & ~exempt & (np.abs(beta) <= eps)
    frozen |= late
    beta[frozen] = 0.0
    return it, converged


def _kkt_zeros(family, Z, y, offset, penalty, lam, beta, frozen, exempt, scale):
    """Coefficients in the linear part of the penalty for which zero satisfies
    the coordinate-wise optimality condition ``|dl/dbeta_j| <= n c_j p'(0+)``."""
    if penalty.kind not in ("scad", "l1"):
        return np.zeros_like(frozen)
    cand = ~frozen & ~exempt & (lam > 0) & (np.abs(beta) <= lam)
    drop = np.zeros_like(frozen)
    if not cand.any():
        return drop
    n = Z.shape[0]
    eta = offset + Z @ beta
    for j in np.flatnonzero(cand):
        g = Z[:, j] @ family.q1(eta - Z[:, j] * beta[j], y)
        drop[j] = abs(g) <= n * scale[j] * lam[j]
    return drop


def _lqa_newton(family, Z, y, offset, penalty, lam, beta_init, exempt, scale=None,
                max_iter=LQA_MAX_ITER, tol=LQA_TOL):
    """Penalized Newton-Raphson with local quadratic approximation.

    Coefficients reaching ``|beta_j| <= zero_threshold`` are set to zero and
    stay there.  LQA shrinks a coefficient whose optimum is zero only
    geometrically, so after the iterations stop, coefficients for which zero
    is coordinate-wise optimal are zeroed too and the iterations resume.
    Returns ``(beta, frozen, iterations, converged)``.
    """
    n, d = Z.shape
    if penalty.kind == "l0":
        raise UnsupportedPenaltyError("L0 is fitted by best-subset search, not LQA")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (d,))
    scale = np.ones(d) if scale is None else np.broadcast_to(scale, (d,))
    beta = np.array(beta_init, dtype=float)
    frozen = np.zeros(d, dtype=bool)
    total = 0
    while True:
        it, converged = _lqa_loop(family, Z, y, offset, penalty, lam, beta, frozen,
                                  exempt, scale, max_iter, tol)
        total += it
        drop = _kkt_zeros(family, Z, y, offset, penalty, lam, beta, frozen, exempt, scale)
        if not drop.any():
            return beta, frozen, total, converged
        frozen |= drop
        beta[frozen] = 0.0


def _hessian(family, Z, y, offset, beta):
    return loglik_parts(family, Z, y, offset, beta)[2]


def _bread(family, data, offset, fit_beta, active, penalty, lam, exempt, scale=None):
    Za = data.z[:, active]
    hess = _hessian(family, Za, data.y, offset, fit_beta[active])
    scale = np.ones(data.d) if scale is None else np.broadcast_to(scale, (data.d,))
    w = _penalty_weights(penalty, np.broadcast_to(lam, (data.d,))[active],
                         fit_beta[active], exempt[active], scale[active])
    return hess - data.n * np.diag(w), hess


def _sandwich(family, data, offset, beta, active, penalty, lam, exempt, scale=None):
    Za = data.z[:, active]
    if Za.shape[1] == 0:
        return np.empty((0, 0))
    bread, _ = _bread(family, data, offset, beta, active, penalty, lam, exempt, scale)
    eta = offset + data.z @ beta
    psi = family.q1(eta, data.y)[:, None] * Za
    mean = psi.mean(axis=0)
    meat = psi.T @ psi - data.n * np.outer(mean, mean)
    try:
        inv = np.linalg.inv(bread)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("sandwich bread matrix is singular") from None
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("sandwich bread matrix is singular")
    cov = inv @ meat @ inv
    return 0.5 * (cov + cov.T)


def _se_from_cov(cov, active):
    se = np.full(active.shape, np.nan)
    se[active] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return se


def fit_unpenalized(data, family, kernel, n_grid=DEFAULT_GRID, exact=False,
                    alpha_tilde=None) -> UnpenalizedFit:
    """One-step estimate with no penalty, plus sandwich standard errors."""
    family = get_family(family)
    family.validate_response(data.y)
    curves = None
    if alpha_tilde is None:
        alpha_tilde, curves = estimate_alpha_tilde(data, family, kernel, n_grid, exact)
    offset = varying_part(data, alpha_tilde)
    res = fit_glm(family, data.z, data.y, offset)
    if not res.converged:
        raise ConvergenceError("global Newton iterations for beta did not converge")
    active = np.ones(data.d, dtype=bool)
    cov = _sandwich(family, data, offset, res.coef, active, PenaltySpec("none"),
                    np.zeros(data.d), np.zeros(data.d, dtype=bool))
    return UnpenalizedFit(res.coef, _se_from_cov(cov, active), cov, alpha_tilde,
                          curves, res.loglik, res.iterations, res.converged)


def _finish(data, family, kernel, penalty, lam, exempt, beta, frozen, iterations,
            converged, alpha_tilde, n_grid, exact, scale=None):
    """Stage 3 plus the summary statistics for a given ``beta``."""
    offset = varying_part(data, alpha_tilde)
    active = ~frozen
    curves = None
    if data.has_varying:
        alpha_hat, curves = alpha_at_observations(data, family, kernel, beta=beta,
                                                  n_grid=n_grid, exact=exact)
    else:
        alpha_hat = np.zeros((data.n, data.p))
    eta_hat = varying_part(data, alpha_hat) + data.z @ beta
    dev = deviance(family, data.y, family.linkinv(eta_hat))
    ll = float(np.sum(family.quasi(family.linkinv(offset + data.z @ beta), data.y)))
    if active.any():
        cov = _sandwich(family, data, offset, beta, active, penalty, lam, exempt, scale)
        bread, hess = _bread(family, data, offset, beta, active, penalty, lam, exempt,
                             scale)
        try:
            e = float(np.trace(np.linalg.solve(bread, hess)))
        except np.linalg.LinAlgError:
            raise SingularMatrixError("penalized Hessian is singular") from None
    else:
        cov = np.empty((0, 0))
        e = 0.0
    n = data.n
    if e >= n:
        raise DegenerateFitError(f"effective parameters {e:.3g} >= n = {n}")
    gcv = dev / (n * (1.0 - e / n) ** 2)
    return SemiFit(
        beta_hat=beta, zero_mask=frozen.copy(), se=_se_from_cov(cov, active),
        alpha_curves=curves, lambda_used=np.broadcast_to(lam, (data.d,)).copy(),
        effective_df=e, gcv=gcv, deviance=dev, iterations=iterations,
        converged=converged, penalty=penalty, loglik=ll, cov=cov, exempt=exempt,
        alpha_tilde=alpha_tilde, alpha_hat=alpha_hat,
        penalty_scale=None if scale is None else np.broadcast_to(scale, (data.d,)).copy(),
        diagnostics={"eta_clamped": family.is_clamped(eta_hat)})


def _exempt_mask(exempt, d):
    if exempt is None:
        return np.zeros(d, dtype=bool)
    exempt = np.asarray(exempt)
    if exempt.dtype == bool:
        return exempt.copy()
    mask = np.zeros(d, dtype=bool)
    mask[exempt.astype(int)] = True
    return mask


def fit_penalized(data, family, kernel, penalty, lambda_vec=None, beta_init=None, *,
                  unpenalized=None, exempt=None, penalty_scale=None,
                  n_grid=DEFAULT_GRID, exact=False) -> SemiFit:
    """Maximize the penalized quasi-likelihood over ``beta`` with ``alpha``
    fixed at the local joint estimate, then refit ``alpha`` given the result.

    The objective is ``l(beta) - n sum_j c_j p_{lambda_j}(|beta_j|)``.
    ``lambda_vec`` gives the per-coefficient ``lambda_j`` (defaults to
    ``penalty.lam``), ``penalty_scale`` the multipliers ``c_j`` (default 1)
    and ``exempt`` marks coefficients left unpenalized.
    """
    family = get_family(family)
    if isinstance(penalty, str):
        penalty = PenaltySpec(penalty)
    if unpenalized is None:
        unpenalized = fit_unpenalized(data, family, kernel, n_grid, exact)
    d = data.d
    lam = penalty.lam_array if lambda_vec is None else np.asarray(lambda_vec, dtype=float)
    lam = np.broadcast_to(lam, (d,)).astype(float)
    exempt = _exempt_mask(exempt, d)
    beta0 = unpenalized.beta_u if beta_init is None else np.asarray(beta_init, dtype=float)
    offset = varying_part(data, unpenalized.alpha_tilde)
    scale = None if penalty_scale is None else np.broadcast_to(
        np.asarray(penalty_scale, dtype=float), (d,))
    beta, frozen, iters, conv = _lqa_newton(family, data.z, data.y, offset, penalty,
                                            lam, beta0, exempt, scale)
    if not conv:
        log.debug("penalized Newton-Raphson did not converge in %d iterations", iters)
    return _finish(data, family, kernel, penalty, lam, exempt, beta, frozen, iters,
                   conv, unpenalized.alpha_tilde, n_grid, exact, scale)


def sandwich_cov(data, family, kernel, fit: SemiFit):
    """Sandwich covariance of the nonzero coefficients of ``fit``."""
    family = get_family(family)
    active = fit.active
    if not active.any():
        raise ValueError("no active coefficients")
    offset = varying_part(data, fit.alpha_tilde)
    exempt = _exempt_mask(fit.exempt, data.d)
    return _sandwich(family, data, offset, fit.beta_hat, active, fit.penalty,
                     fit.lambda_used, exempt, fit.penalty_scale)


def effective_df(data, family, kernel, fit: SemiFit) -> float:
    """``tr[{l'' - n Sigma_lambda}^{-1} l'']`` over the nonzero coefficients."""
    family = get_family(family)
    active = fit.active
    if not active.any():
        return 0.0
    offset = varying_part(data, fit.alpha_tilde)
    exempt = _exempt_mask(fit.exempt, data.d)
    bread, hess = _bread(family, data, offset, fit.beta_hat, active, fit.penalty,
                         fit.lambda_used, exempt, fit.penalty_scale)
    try:
        return float(np.trace(np.linalg.solve(bread, hess)))
    except np.linalg.LinAlgError:
        raise SingularMatrixError("penalized Hessian is singular") from None


def gcv_score(data, family, kernel, fit: SemiFit) -> float:
    e = effective_df(data, family, kernel, fit)
    n = data.n
    if e >= n:
        raise DegenerateFitError(f"effective parameters {e:.3g} >= n = {n}")
    return fit.deviance / (n * (1.0 - e / n) ** 2)


@dataclass
class PathPoint:
    lam: float
    gcv: float
    df: float
    zero_mask: Optional[np.ndarray]
    converged: bool
    error: Optional[str] = None

    @property
    def n_zero(self):
        return -1 if self.zero_mask is None else int(self.zero_mask.sum())


@dataclass
class LambdaSearch:
    lambda_star: float
    path: list
    fit: SemiFit
    unpenalized: UnpenalizedFit = field(repr=False)


SCALINGS = ("information", "standardized", "literal")


def _se_scale(unpenalized):
    se = np.nan_to_num(unpenalized.se_u, nan=0.0)
    return se


def penalty_multipliers(unpenalized, n, scaling="information"):
    """Multipliers ``c_j`` used with ``lambda_j = lambda SE_j``.

    ``"literal"`` gives ``c_j = 1``.  ``"information"`` gives
    ``c_j = 1 / (n SE_j^2)``, the inverse per-observation information of
    ``beta_j``.  This puts the penalty on the standardized coefficient
    ``beta_j / SE_j`` and makes the selection invariant to the scale of the
    likelihood; with unit information per observation both choices agree.
    """
    if scaling not in SCALINGS:
        raise ValueError(f"unknown penalty scaling {scaling!r}; expected one of {SCALINGS}")
    se = _se_scale(unpenalized)
    if scaling == "literal":
        return None
    with np.errstate(divide="ignore"):
        c = np.where(se > 0, 1.0 / se**2, 1.0)
    return c / n if scaling == "information" else c


def lambda_max(data, family, penalty, unpenalized, exempt=None, refine=12,
               scaling="information"):
    """Smallest scalar ``lambda`` (times the SEs) that zeroes every penalized
    coefficient: doubling search, then bisection."""
    family = get_family(family)
    d = data.d
    exempt = _exempt_mask(exempt, d)
    if d == 0 or exempt.all():
        return 0.0
    se = _se_scale(unpenalized)
    scale = penalty_multipliers(unpenalized, data.n, scaling)
    offset = varying_part(data, unpenalized.alpha_tilde)

    def zeroes_all(lam):
        _, frozen, _, _ = _lqa_newton(family, data.z, data.y, offset, penalty,
                                      lam * se, unpenalized.beta_u, exempt, scale)
        return bool(frozen[~exempt].all())

    lam = 1.0
    if zeroes_all(lam):
        hi = lam
        lo = lam / 2
        while zeroes_all(lo):
            hi, lo = lo, lo / 2
            if lo < 1e-12:
                return hi
    else:
        lo = lam
        hi = 2 * lam
        while not zeroes_all(hi):
            lo, hi = hi, 2 * hi
            if hi > 1e12:
                raise ConvergenceError("no lambda zeroes all coefficients")
    for _ in range(refine):
        mid = 0.5 * (lo + hi)
        if zeroes_all(mid):
            hi = mid
        else:
            lo = mid
    return hi


def default_lambda_grid(lmax, n_grid_lambda=50):
    if lmax <= 0:
        return np.array([0.0])
    return np.geomspace(1e-3 * lmax, lmax, int(n_grid_lambda))


def _path_point(lam, data, family, kernel, penalty, unpenalized, exempt, scaling,
                n_grid, exact):
    se = _se_scale(unpenalized)
    try:
        fit = fit_penalized(data, family, kernel, penalty, lam * se,
                            unpenalized=unpenalized, exempt=exempt,
                            penalty_scale=penalty_multipliers(unpenalized, data.n, scaling),
                            n_grid=n_grid, exact=exact)
    except GVCPLMError as exc:
        return PathPoint(float(lam), np.inf, np.nan, None, False,
                         f"{type(exc).__name__}: {exc}"), None
    fit.lambda_scalar = float(lam)
    return PathPoint(float(lam), fit.gcv, fit.effective_df, fit.zero_mask.copy(),
                     fit.converged), fit


def select_lambda(data, family, kernel, penalty="scad", grid=None, n_grid_lambda=50, *,
                  unpenalized=None, exempt=None, scaling="information",
                  n_grid=DEFAULT_GRID, exact=False, n_jobs=1) -> LambdaSearch:
    """GCV grid search over a scalar ``lambda`` with ``lambda_j = lambda * SE_j``.

    ``scaling`` picks the penalty multipliers (see :func:`penalty_multipliers`).
    Ties in GCV go to the smaller ``lambda``.
    """
    family = get_family(family)
    if isinstance(penalty, str):
        penalty = PenaltySpec(penalty)
    if unpenalized is None:
        unpenalized = fit_unpenalized(data, family, kernel, n_grid, exact)
    if grid is None:
        lmax = lambda_max(data, family, penalty, unpenalized, exempt, scaling=scaling)
        grid = default_lambda_grid(lmax, n_grid_lambda)
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0 or np.any(grid < 0):
        raise ValueError("lambda grid must be nonempty and nonnegative")
    work = partial(_path_point, data=data, family=family, kernel=kernel,
                   penalty=penalty, unpenalized=unpenalized, exempt=exempt,
                   scaling=scaling, n_grid=n_grid, exact=exact)
    results = ordered_map(work, grid, n_jobs=n_jobs)
    path = [r[0] for r in results]
    scores = np.array([pt.gcv for pt in path])
    if not np.any(np.isfinite(scores)):
        raise ConvergenceError("every point of the lambda path failed: "
                               + (path[0].error or "unknown error"))
    best = int(np.argmin(scores))  # first minimizer = smallest lambda
    fit = results[best][1]
    fit.lambda_path = path
    return LambdaSearch(float(grid[best]), path, fit, unpenalized)


def backfit(data, family, kernel, penalty=None, lambda_policy="gcv", *,
            exempt=None, scaling="information", n_grid=DEFAULT_GRID, exact=False,
            lambda_grid=None, n_jobs=1) -> SemiFit:
    """The full pipeline: local joint fit, (penalized) global ``beta``, and
    the final local fit of ``alpha`` given ``beta``.

    ``lambda_policy`` is ``"gcv"`` for the grid search or a number used as the
    scalar ``lambda`` (multiplied by the unpenalized SEs).
    """
    family = get_family(family)
    if isinstance(penalty, str):
        penalty = PenaltySpec(penalty)
    stage = "local joint fit"
    try:
        unpen = fit_unpenalized(data, family, kernel, n_grid, exact)
        stage = "penalized global fit"
        if data.d == 0 or penalty is None or penalty.kind == "none":
            fit = fit_penalized(data, family, kernel, PenaltySpec("none"), 0.0,
                                unpenalized=unpen, n_grid=n_grid, exact=exact)
            fit.lambda_scalar = 0.0
        elif lambda_policy == "gcv":
            fit = select_lambda(data, family, kernel, penalty, grid=lambda_grid,
                                unpenalized=unpen, exempt=exempt, scaling=scaling,
                                n_grid=n_grid, exact=exact, n_jobs=n_jobs).fit
        else:
            lam = float(lambda_policy)
            fit = fit_penalized(data, family, kernel, penalty, lam * _se_scale(unpen),
                                unpenalized=unpen, exempt=exempt,
                                penalty_scale=penalty_multipliers(unpen, data.n, scaling),
                                n_grid=n_grid, exact=exact)
            fit.lambda_scalar = lam
    except GVCPLMError as exc:
        exc.args = (f"[{stage}] {exc}",) + exc.args[1:]
        raise
    fit.diagnostics["unpenalized_beta"] = unpen.beta_u
    fit.diagnostics["unpenalized_se"] = unpen.se_u
    return fit
