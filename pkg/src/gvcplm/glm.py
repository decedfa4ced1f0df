"""Newton-Raphson for quasi-likelihood regression with a fixed offset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError

MAX_ITER = 100
MAX_HALVINGS = 10
RIDGE_TAU = 1e-8


def objective_tol(obj):
    # slack for floating-point noise when comparing objective values
    return 1e-12 * (1.0 + np.abs(obj))


def solve_pd(A, g, tau=RIDGE_TAU):
    """Solve ``A x = g`` for a batch of symmetric positive definite ``A``.

    Matrices whose Cholesky factorization fails get ``tau * mean(diag(A))``
    added to the diagonal (escalated tenfold until it succeeds).  Returns the
    solution and a boolean array marking where the ridge was needed.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    single = A.ndim == 2
    if single:
        A, g = A[None], g[None]
    ridged = np.zeros(A.shape[0], dtype=bool)
    try:
        np.linalg.cholesky(A)
        x = np.linalg.solve(A, g[..., None])[..., 0]
        if np.all(np.isfinite(x)):
            return (x[0], ridged[0]) if single else (x, ridged)
    except np.linalg.LinAlgError:
        pass
    x = np.empty_like(g)
    k = A.shape[-1]
    for i in range(A.shape[0]):
        Ai = A[i]
        try:
            np.linalg.cholesky(Ai)
            xi = np.linalg.solve(Ai, g[i])
            if np.all(np.isfinite(xi)):
                x[i] = xi
                continue
        except np.linalg.LinAlgError:
            pass
        ridged[i] = True
        scale = np.mean(np.abs(np.diag(Ai)))
        if not scale > 0 or not np.isfinite(scale):
            raise SingularMatrixError("Hessian is zero or not finite")
        t = tau
        while True:
            try:
                Ar = Ai + t * scale * np.eye(k)
                np.linalg.cholesky(Ar)
                x[i] = np.linalg.solve(Ar, g[i])
                break
            except np.linalg.LinAlgError:
                t *= 10.0
                if t > 1e-2:
                    raise SingularMatrixError("Hessian is singular even after ridging") from None
    return (x[0], ridged[0]) if single else (x, ridged)


@dataclass
class GlmResult:
    coef: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    ridge: bool


def loglik_parts(family, design, y, offset, coef):
    """Quasi-log-likelihood, score and Hessian in ``coef``."""
    eta = offset + design @ coef
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ll = float(np.sum(family.quasi(family.linkinv(eta), y)))
    q1 = family.q1(eta, y)
    q2 = family.q2(eta, y)
    grad = design.T @ q1
    hess = (design * q2[:, None]).T @ design
    return ll, grad, hess


def _loglik(family, design, y, offset, coef):
    eta = offset + design @ coef
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ll = np.sum(family.quasi(family.linkinv(eta), y))
    return float(ll) if np.isfinite(ll) else -np.inf


def fit_glm(family, design, y, offset=None, coef0=None, weights=None,
            max_iter=MAX_ITER, tol=1e-9) -> GlmResult:
    """Maximize ``sum_i w_i Q(g^{-1}(offset_i + design_i coef), y_i)``."""
    design = np.asarray(design, dtype=float)
    n, k = design.shape
    y = np.asarray(y, dtype=float)
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    coef = np.zeros(k) if coef0 is None else np.array(coef0, dtype=float)
    if k == 0:
        return GlmResult(coef, _loglik(family, design, y, offset, coef), 0, True, False)

    def obj(c):
        eta = offset + design @ c
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.sum(w * family.quasi(family.linkinv(eta), y))
        return float(v) if np.isfinite(v) else -np.inf

    cur = obj(coef)
    ridge_any = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = offset + design @ coef
        grad = design.T @ (w * family.q1(eta, y))
        negq2 = -w * family.q2(eta, y)
        dw = design * np.sqrt(negq2)[:, None]
        step, ridged = solve_pd(dw.T @ dw, grad)
        ridge_any |= bool(ridged)
        small = np.all(np.abs(step) < tol * (1.0 + np.abs(coef)))
        for _ in range(MAX_HALVINGS + 1):
            cand = coef + step
            val = obj(cand)
            if val >= cur - objective_tol(cur):
                break
            step = 0.5 * step
        else:
            converged = bool(small)
            break
        coef, cur = cand, val
        if small:
            converged = True
            break
    return GlmResult(coef, cur, it, converged, ridge_any)
