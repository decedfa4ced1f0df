"""Local linear quasi-likelihood estimation of the coefficient functions.

Around an evaluation point ``u0`` each coefficient function is replaced by
``a_j + b_j (U - u0)`` and the kernel-weighted quasi-likelihood is maximized,
either jointly with a local ``beta`` or with ``beta`` held fixed.

Many evaluation points are fitted in one batch: for every point only the
observations inside the kernel window enter (the window is a contiguous block
of the sorted ``U``), padded to a common width with zero weight.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InsufficientWindowError
from .families import get_family
from .glm import MAX_HALVINGS, MAX_ITER, fit_glm, objective_tol, solve_pd

NEWTON_TOL = 1e-9
DEFAULT_GRID = 200


@dataclass(frozen=True)
class LocalFit:
    u0: float
    a: np.ndarray
    b: np.ndarray
    beta_local: Optional[np.ndarray]
    iterations: int
    converged: bool
    effective_kernel_mass: float
    ridge: bool = False
    score: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CoefficientCurves:
    """Estimated ``alpha(u)`` and ``alpha'(u)`` on an increasing grid."""

    grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def p(self):
        return self.values.shape[1]

    def at(self, u):
        """Linear interpolation of the curves to ``u`` (constant beyond the ends)."""
        u = np.asarray(u, dtype=float)
        return np.column_stack([np.interp(u, self.grid, self.values[:, j])
                                for j in range(self.p)])

    def to_csv(self, path, names=None):
        names = names or [f"x{j + 1}" for j in range(self.p)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u"] + [f"alpha_{n}" for n in names]
                       + [f"dalpha_{n}" for n in names])
            for k in range(len(self.grid)):
                w.writerow([repr(float(self.grid[k]))]
                           + [repr(float(v)) for v in self.values[k]]
                           + [repr(float(v)) for v in self.derivatives[k]])


@dataclass
class BatchFit:
    points: np.ndarray
    a: np.ndarray          # (G, p)
    b: np.ndarray          # (G, p)
    beta_local: Optional[np.ndarray]  # (G, d) for joint fits
    iterations: np.ndarray
    converged: np.ndarray
    mass: np.ndarray
    ridge: np.ndarray
    score: np.ndarray      # (G, k) final local score, in the internal scaling

    def local_fit(self, g) -> LocalFit:
        return LocalFit(
            u0=float(self.points[g]), a=self.a[g].copy(), b=self.b[g].copy(),
            beta_local=None if self.beta_local is None else self.beta_local[g].copy(),
            iterations=int(self.iterations[g]), converged=bool(self.converged[g]),
            effective_kernel_mass=float(self.mass[g]), ridge=bool(self.ridge[g]),
            score=self.score[g].copy())


def pilot_alpha(data, family, offset=None):
    """Global unweighted GLM of ``y`` on ``x``: the starting value for ``a``."""
    res = fit_glm(family, data.x, data.y, offset)
    if not np.all(np.isfinite(res.coef)):
        return np.zeros(data.p)
    return res.coef


def _windows(u, points, half):
    order = np.argsort(u, kind="stable")
    us = u[order]
    lo = np.searchsorted(us, points - half, side="left")
    hi = np.searchsorted(us, points + half, side="right")
    width = max(int(np.max(hi - lo)), 1)
    idx = lo[:, None] + np.arange(width)[None, :]
    valid = idx < hi[:, None]
    idx = np.minimum(idx, len(u) - 1)
    return order[idx], valid


def fit_local_batch(data, family, kernel, points, beta=None, joint=False,
                    theta0=None, max_iter=MAX_ITER, tol=NEWTON_TOL,
                    check_window=True) -> BatchFit:
    """Local linear fits at every point of ``points``.

    With ``joint`` the local parameter is ``(a, b, beta)``; otherwise ``beta``
    (zeros when omitted) enters as a fixed offset ``Z beta``.
    """
    family = get_family(family)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n, p, d = data.n, data.p, data.d
    h = kernel.h
    joint = joint and d > 0
    k = 2 * p + (d if joint else 0)

    if beta is None:
        beta = np.zeros(d)
    beta = np.asarray(beta, dtype=float)
    offset = np.zeros(n) if (joint or d == 0) else data.z @ beta

    obs, valid = _windows(data.u, points, kernel.support * h)
    t = (data.u[obs] - points[:, None]) / h
    w = kernel(t) / h * valid
    nonzero = (w > 0).sum(axis=1)
    mass = w.sum(axis=1)
    if check_window:
        need = 2 * p + (d if joint else 0) + 1
        bad = np.flatnonzero(nonzero < need)
        if bad.size:
            u0 = float(points[bad[0]])
            raise InsufficientWindowError(
                f"only {int(nonzero[bad[0]])} observations carry kernel weight at "
                f"u0={u0:.6g}; need at least {need} (increase h)", u0=u0)

    # internal parameterization uses (U - u0)/h so b is on the scale of a
    xo = data.x[obs]
    parts = [xo, xo * t[..., None]]
    if joint:
        parts.append(data.z[obs])
    D = np.concatenate(parts, axis=2)
    yb = data.y[obs]
    ob = offset[obs]

    G = len(points)
    theta = np.zeros((G, k))
    if theta0 is None:
        theta[:, :p] = pilot_alpha(data, family, offset if not joint else None)
    else:
        theta0 = np.asarray(theta0, dtype=float)
        theta[:] = theta0 if theta0.ndim == 2 else theta0[None, :]

    def objective(sel, th):
        eta = np.einsum("gmk,gk->gm", D[sel], th) + ob[sel]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            q = family.quasi(family.linkinv(eta), yb[sel])
            v = np.sum(np.where(w[sel] > 0, w[sel] * q, 0.0), axis=1)
        return np.where(np.isfinite(v), v, -np.inf)

    every = np.arange(G)
    obj = objective(every, theta)
    active = np.ones(G, dtype=bool)
    iters = np.zeros(G, dtype=int)
    conv = np.zeros(G, dtype=bool)
    ridge = np.zeros(G, dtype=bool)

    for _ in range(max_iter):
        sel = np.flatnonzero(active)
        if sel.size == 0:
            break
        Ds, ws, ths = D[sel], w[sel], theta[sel]
        eta = np.einsum("gmk,gk->gm", Ds, ths) + ob[sel]
        grad = np.einsum("gm,gmk->gk", ws * family.q1(eta, yb[sel]), Ds)
        Dw = Ds * np.sqrt(ws * -family.q2(eta, yb[sel]))[..., None]
        negH = np.matmul(Dw.transpose(0, 2, 1), Dw)
        step, ridged = solve_pd(negH, grad)
        ridge[sel] |= ridged
        small = np.all(np.abs(step) < tol * (1.0 + np.abs(ths)), axis=1)

        cand = ths + step
        cobj = objective(sel, cand)
        base = obj[sel]
        ok = cobj >= base - objective_tol(base)
        for _ in range(MAX_HALVINGS):
            todo = np.flatnonzero(~ok)
            if todo.size == 0:
                break
            step[todo] *= 0.5
            cand[todo] = ths[todo] + step[todo]
            cobj[todo] = objective(sel[todo], cand[todo])
            ok[todo] = cobj[todo] >= base[todo] - objective_tol(base[todo])

        theta[sel[ok]] = cand[ok]
        obj[sel[ok]] = cobj[ok]
        iters[sel] += 1
        # a point stops when its full Newton step is negligible, or when no
        # halved step improves the objective (numerically at the optimum)
        conv[sel[small]] = True
        stalled = ~ok & ~small
        conv[sel[stalled]] = np.all(
            np.abs(step[stalled]) < 1e-6 * (1.0 + np.abs(ths[stalled])), axis=1)
        active[sel[small | stalled]] = False

    eta = np.einsum("gmk,gk->gm", D, theta) + ob
    score = np.einsum("gm,gmk->gk", w * family.q1(eta, yb), D)

    a = theta[:, :p]
    b = theta[:, p:2 * p] / h
    beta_local = theta[:, 2 * p:] if joint else None
    return BatchFit(points, a, b, beta_local, iters, conv, mass, ridge, score)


def local_fit_joint(data, family, kernel, u0, theta0=None) -> LocalFit:
    """Maximize the local likelihood over ``(a, b, beta)`` at ``u0``."""
    return fit_local_batch(data, family, kernel, [u0], joint=True,
                           theta0=theta0).local_fit(0)


def local_fit_alpha(data, family, kernel, u0, beta, theta0=None) -> LocalFit:
    """Maximize the local likelihood over ``(a, b)`` at ``u0`` with ``beta`` fixed."""
    return fit_local_batch(data, family, kernel, [u0], beta=beta,
                           theta0=theta0).local_fit(0)


def make_grid(data, n_grid=DEFAULT_GRID):
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    return np.linspace(data.omega_lo, data.omega_hi, int(n_grid))


def _require_converged(batch):
    bad = np.flatnonzero(~batch.converged)
    if bad.size:
        u0 = float(batch.points[bad[0]])
        raise ConvergenceError(
            f"local Newton iterations did not converge at u0={u0:.6g} "
            f"({bad.size} of {len(batch.points)} points)")


def alpha_on_grid(data, family, kernel, beta=None, n_grid=DEFAULT_GRID,
                  joint=False) -> CoefficientCurves:
    """Fit ``alpha`` independently at ``n_grid`` equispaced points of the support."""
    batch = fit_local_batch(data, family, kernel, make_grid(data, n_grid),
                            beta=beta, joint=joint)
    _require_converged(batch)
    return CoefficientCurves(batch.points, batch.a, batch.b)


def alpha_at_observations(data, family, kernel, beta=None, joint=False,
                          n_grid=DEFAULT_GRID, exact=False):
    """``alpha`` evaluated at every observed ``U_i``.

    By default the curves are fitted on a grid and interpolated linearly;
    ``exact`` fits at each distinct ``U_i`` instead.  Returns the ``(n, p)``
    matrix and the grid curves.
    """
    if exact:
        pts, inv = np.unique(data.u, return_inverse=True)
        batch = fit_local_batch(data, family, kernel, pts, beta=beta, joint=joint)
        _require_converged(batch)
        curves = CoefficientCurves(batch.points, batch.a, batch.b) if len(pts) > 1 else None
        return batch.a[inv], curves
    curves = alpha_on_grid(data, family, kernel, beta=beta, n_grid=n_grid, joint=joint)
    return curves.at(data.u), curves


def undersmooth(h_opt: float, n: int) -> float:
    """Rescale an MSE-optimal bandwidth by ``n^(-2/15)`` to order ``n^(-1/3)``."""
    if not h_opt > 0 or n < 1:
        raise ValueError("need h_opt > 0 and n >= 1")
    return float(h_opt) * float(n) ** (-2.0 / 15.0)
