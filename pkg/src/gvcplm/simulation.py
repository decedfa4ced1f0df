"""Simulation scenarios, error metrics and Monte Carlo studies.

Every replication draws from its own Philox stream keyed by
``(seed, replication)``, so results do not depend on how replications are
scheduled across worker processes.
"""

from __future__ import annotations

import ast
import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np
from scipy import stats

from ._parallel import ordered_map, substream
from .data import Dataset
from .errors import ConvergenceError, GVCPLMError, NumericalError
from .estimator import backfit, fit_unpenalized, select_lambda
from .families import get_family
from .glrt import bootstrap_null, bootstrap_pvalue, glrt_statistic
from .kernels import make_kernel
from .penalties import PenaltySpec
from .smoother import DEFAULT_GRID, alpha_on_grid
from .subset import (best_subset, criterion_lambda, enumerate_subsets, oracle_fit,
                     select_from_scores)

log = logging.getLogger(__name__)

MAX_REPLICATION_FAILURES = 0.05
METHODS = ("SCAD", "L1", "AIC", "BIC", "RIC", "Oracle")
L0_METHODS = ("AIC", "BIC", "RIC")

# Coefficient function catalog.
ALPHA_CATALOG = {
    "zero": lambda u: np.zeros_like(u),
    "one": lambda u: np.ones_like(u),
    "ex41_a1": lambda u: 5.5 + 0.1 * np.exp(2 * u - 1),
    "ex41_a2": lambda u: 0.8 * u * (1 - u),
    "ex42_a1": lambda u: np.exp(2 * u - 1),
    "ex42_a2": lambda u: 2 * np.sin(2 * np.pi * u) ** 2,
}

_EXPR_NAMES = {
    "u": None, "pi": np.pi, "e": np.e,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
    "tan": np.tan, "tanh": np.tanh, "abs": np.abs, "minimum": np.minimum,
    "maximum": np.maximum,
}
_EXPR_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
               ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
               ast.UAdd, ast.Mod)


def compile_expression(text):
    """Compile an arithmetic expression in ``u`` into a vectorized function.

    Only numbers, ``u``, arithmetic operators and a few numpy functions
    (``exp``, ``log``, ``sin`` ...) are accepted.
    """
    tree = ast.parse(text.strip(), mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise ValueError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _EXPR_NAMES:
            raise ValueError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise ValueError(f"only plain function calls are allowed in {text!r}")
    code = compile(tree, "<alpha>", "eval")
    names = {k: v for k, v in _EXPR_NAMES.items() if v is not None}

    def func(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(eval(code, {"__builtins__": {}}, {**names, "u": u}),
                               u.shape).astype(float)

    return func


def resolve_alpha(name):
    if name.startswith("expr:"):
        return compile_expression(name[5:])
    try:
        return ALPHA_CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown coefficient function {name!r}; use a catalog "
                         f"name {sorted(ALPHA_CATALOG)} or 'expr:<expression>'") from None


@dataclass(frozen=True)
class ScenarioSpec:
    """A simulation design.

    ``alpha`` names the coefficient functions (catalog names or
    ``"expr:..."``); ``alpha_scale`` multiplies them, which is how the
    alternatives of the power study are indexed.  ``x`` holds an intercept and
    ``len(alpha) - 1`` standard normal columns, ``z`` is normal with
    ``cov_ij = rho^|i-j|`` and ``U`` is uniform on [0, 1].
    """

    family: str
    n: int
    h: float
    alpha: tuple
    beta_true: tuple
    rho: float = 0.5
    alpha_scale: tuple = ()
    seed: int = 0
    kernel: str = "epanechnikov"
    noise_scale: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(self.alpha))
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        scale = tuple(float(s) for s in self.alpha_scale) or (1.0,) * len(self.alpha)
        object.__setattr__(self, "alpha_scale", scale)
        errors = []
        if not self.alpha:
            errors.append("at least one coefficient function is required")
        if len(scale) != len(self.alpha):
            errors.append("alpha_scale must match alpha in length")
        if not abs(self.rho) < 1:
            errors.append("rho must satisfy |rho| < 1")
        if int(self.n) < 2:
            errors.append("n must be at least 2")
        if not self.h > 0:
            errors.append("h must be positive")
        if not self.noise_scale > 0:
            errors.append("noise_scale must be positive")
        try:
            get_family(self.family)
            make_kernel(self.kernel, self.h if self.h > 0 else 1.0)
            for a in self.alpha:
                resolve_alpha(a)
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def p(self):
        return len(self.alpha)

    @property
    def d(self):
        return len(self.beta_true)

    @property
    def true_support(self):
        return tuple(j for j, b in enumerate(self.beta_true) if b != 0)

    @property
    def sigma_z(self):
        return sigma_z(self.d, self.rho)

    def kernel_spec(self):
        return make_kernel(self.kernel, self.h)

    def true_alpha(self, u):
        """``(len(u), p)`` matrix of the scaled true coefficient functions."""
        u = np.asarray(u, dtype=float)
        return np.column_stack([s * resolve_alpha(a)(u)
                                for a, s in zip(self.alpha, self.alpha_scale)])

    def with_d(self, d):
        """Truncate or zero-pad ``beta_true`` to length ``d``."""
        beta = list(self.beta_true[:d]) + [0.0] * max(0, d - self.d)
        return replace(self, beta_true=tuple(beta))

    def with_delta(self, delta, index=1):
        scale = list(self.alpha_scale)
        scale[index] = float(delta)
        return replace(self, alpha_scale=tuple(scale))

    def to_dict(self):
        return asdict(self)


EXAMPLE41_BETA = (0.3, 0.15, 0, 0, 0.2, 0, 0, 0, 0, 0)
EXAMPLE42_BETA = (3, 1.5, 0, 0, 2, 0, 0, 0, 0, 0)

PRESETS = {
    "example41": ScenarioSpec("poisson", 200, 0.125, ("ex41_a1", "ex41_a2"),
                              EXAMPLE41_BETA, 0.5, name="example41"),
    # desk scale: n = 400 with h rescaled under the n^(-1/3) rule
    "example42": ScenarioSpec("bernoulli", 400, 0.3 * (1000 / 400) ** (1 / 3),
                              ("ex42_a1", "ex42_a2"), EXAMPLE42_BETA, 0.5,
                              name="example42"),
    "example42_full": ScenarioSpec("bernoulli", 1000, 0.3, ("ex42_a1", "ex42_a2"),
                                   EXAMPLE42_BETA, 0.5, name="example42_full"),
}


def get_scenario(name) -> ScenarioSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(PRESETS)}") \
            from None


def sigma_z(d, rho):
    idx = np.arange(d)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def gen_scenario(spec: ScenarioSpec, rng=None) -> Dataset:
    """Draw one dataset.  ``rng`` defaults to the stream of ``spec.seed``."""
    rng = substream(spec.seed) if rng is None else rng
    n, p, d = int(spec.n), spec.p, spec.d
    u = rng.random(n)
    x = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    if d:
        try:
            chol = np.linalg.cholesky(spec.sigma_z)
        except np.linalg.LinAlgError:
            raise NumericalError("covariance of z is not positive definite") from None
        z = rng.standard_normal((n, d)) @ chol.T
    else:
        z = np.zeros((n, 0))
    family = get_family(spec.family)
    eta = np.einsum("ij,ij->i", x, spec.true_alpha(u)) + z @ np.asarray(spec.beta_true)
    y = family.sample(family.linkinv(eta), rng, spec.noise_scale)
    return Dataset(u, x, z, y,
                   x_names=("(intercept)",) + tuple(f"x{j + 1}" for j in range(1, p)),
                   z_names=tuple(f"z{j + 1}" for j in range(d)))


def rase(curves, truth) -> float:
    """Root average squared error of the curves over their own grid.

    ``truth`` maps a vector of ``u`` to the ``(len(u), p)`` true values.
    """
    diff = curves.values - np.asarray(truth(curves.grid), dtype=float)
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def gmse(beta_hat, beta_true, sigma) -> float:
    """``(beta_hat - beta)^T E(Z Z^T) (beta_hat - beta)``."""
    err = np.asarray(beta_hat, dtype=float) - np.asarray(beta_true, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (err.size, err.size):
        raise ValueError(f"sigma must be {err.size}x{err.size}, got {sigma.shape}")
    return float(max(err @ sigma @ err, 0.0))


def zero_counts(beta_hat, beta_true):
    """``(C, I)``: true zeros estimated as zero, true nonzeros estimated as zero."""
    est_zero = np.asarray(beta_hat) == 0
    true_zero = np.asarray(beta_true) == 0
    return int(np.sum(est_zero & true_zero)), int(np.sum(est_zero & ~true_zero))


def mad_scaled(values):
    return float(stats.median_abs_deviation(values) / 0.6745)


def _check_failures(n_failed, R, what):
    if n_failed > MAX_REPLICATION_FAILURES * R:
        raise ConvergenceError(f"{n_failed} of {R} {what} replications failed")


# ----------------------------------------------------------------- selection study

@dataclass
class MethodRow:
    method: str
    rgmse_median: float
    rgmse_mad_scaled: float
    c_avg: float
    i_avg: float
    time_mean: float
    time_sd: float
    rgmse: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    i: np.ndarray = field(repr=False)


@dataclass
class StudyReport:
    rows: list
    R: int
    scenario: ScenarioSpec
    seed: int
    n_failed: int = 0

    def row(self, method) -> MethodRow:
        for r in self.rows:
            if r.method.upper() == method.upper():
                return r
        raise KeyError(method)

    def to_text(self):
        zeros = sum(b == 0 for b in self.scenario.beta_true)
        lines = [f"scenario {self.scenario.name}: {self.scenario.family}, "
                 f"n = {self.scenario.n}, h = {self.scenario.h:.4g}, R = {self.R}, "
                 f"seed = {self.seed}",
                 f"{'method':<8}{'RGMSE median (MAD)':>24}{'C':>8}{'I':>8}{'time (s)':>12}"]
        for r in self.rows:
            med = f"{r.rgmse_median:.4f} ({r.rgmse_mad_scaled:.4f})"
            lines.append(f"{r.method:<8}{med:>24}{r.c_avg:>8.4f}{r.i_avg:>8.4f}"
                         f"{r.time_mean:>12.4f}")
        lines.append(f"C counts the {zeros} true zeros set to zero; I counts the "
                     f"{self.scenario.d - zeros} true nonzeros set to zero.")
        if self.n_failed:
            lines.append(f"{self.n_failed} replications failed and were dropped.")
        return "\n".join(lines) + "\n"

    def to_csv(self, timing=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["method", "rgmse_median", "rgmse_mad_scaled", "c_avg", "i_avg"]
        w.writerow(head + (["time_mean", "time_sd"] if timing else []))
        for r in self.rows:
            vals = [r.rgmse_median, r.rgmse_mad_scaled, r.c_avg, r.i_avg]
            vals += [r.time_mean, r.time_sd] if timing else []
            w.writerow([r.method] + [repr(float(v)) for v in vals])
        return buf.getvalue()

    def to_dict(self, timing=False):
        rows = []
        for r in self.rows:
            row = {"method": r.method, "rgmse_median": r.rgmse_median,
                   "rgmse_mad_scaled": r.rgmse_mad_scaled, "c_avg": r.c_avg,
                   "i_avg": r.i_avg}
            if timing:
                row.update(time_mean=r.time_mean, time_sd=r.time_sd)
            rows.append(row)
        return {"R": self.R, "seed": self.seed, "n_failed": self.n_failed,
                "scenario": self.scenario.to_dict(), "rows": rows}


def _normalize_methods(methods):
    out = []
    for m in methods:
        key = {"l1": "L1", "oracle": "Oracle"}.get(m.lower(), m.upper())
        if key not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected a subset of {METHODS}")
        if key not in out:
            out.append(key)
    if not out:
        raise ValueError("no methods given")
    return out


def run_methods(data, spec, methods, n_grid=DEFAULT_GRID, exact=False):
    """Fit every method on one dataset.

    Returns ``{method: (beta_hat, seconds)}`` plus the unpenalized full fit.
    The L0 criteria share one enumeration of all subsets.
    """
    family = get_family(spec.family)
    kernel = spec.kernel_spec()
    full = fit_unpenalized(data, family, kernel, n_grid, exact)
    out = {}
    enum = None
    for m in methods:
        start = time.perf_counter()
        if m in ("SCAD", "L1"):
            beta = select_lambda(data, family, kernel, PenaltySpec(m.lower()),
                                 unpenalized=full, n_grid=n_grid, exact=exact).fit.beta_hat
        elif m == "Oracle":
            beta = oracle_fit(data, family, kernel, spec.true_support, n_grid,
                              exact).beta_hat
        else:
            if enum is None:
                enum = enumerate_subsets(data, family, kernel, n_grid=n_grid, exact=exact)
            cols = select_from_scores(enum.logliks, criterion_lambda(m, data.n, data.d),
                                      data.n)
            # refit only for the coefficient values
            beta = oracle_fit(data, family, kernel, cols, n_grid, exact).beta_hat
        elapsed = time.perf_counter() - start
        if m in L0_METHODS:
            elapsed = enum.wall_time
        out[m] = (beta, elapsed)
    return out, full


def _table1_replication(r, spec, methods, seed, n_grid, exact):
    data = gen_scenario(spec, substream(seed, r))
    try:
        fits, full = run_methods(data, spec, methods, n_grid, exact)
    except GVCPLMError as exc:
        log.warning("replication %d failed: %s", r, exc)
        return None
    sigma = spec.sigma_z
    denom = gmse(full.beta_u, spec.beta_true, sigma)
    rows = {}
    for m, (beta, secs) in fits.items():
        c, i = zero_counts(beta, spec.beta_true)
        rows[m] = (gmse(beta, spec.beta_true, sigma) / denom, c, i, secs)
    return rows


def run_table1_study(spec, methods=("SCAD", "L1", "Oracle"), R=100, seed=0,
                     n_grid=DEFAULT_GRID, exact=False, n_jobs=1) -> StudyReport:
    """Variable selection comparison: relative GMSE and zero counts per method."""
    methods = _normalize_methods(methods)
    if R < 1:
        raise ValueError("R must be at least 1")
    work = partial(_table1_replication, spec=spec, methods=methods, seed=seed,
                   n_grid=n_grid, exact=exact)
    results = ordered_map(work, range(R), n_jobs=n_jobs)
    ok = [res for res in results if res is not None]
    n_failed = R - len(ok)
    _check_failures(n_failed, R, "simulation")
    rows = []
    for m in methods:
        vals = np.array([res[m] for res in ok], dtype=float).reshape(-1, 4)
        rg = vals[:, 0]
        rows.append(MethodRow(m, float(np.median(rg)), mad_scaled(rg),
                              float(vals[:, 1].mean()), float(vals[:, 2].mean()),
                              float(vals[:, 3].mean()), float(vals[:, 3].std(ddof=1))
                              if len(vals) > 1 else 0.0,
                              rg, vals[:, 1], vals[:, 2]))
    return StudyReport(rows, R, spec, seed, n_failed)


# ----------------------------------------------------------------- timing study

@dataclass
class TimingRow:
    method: str
    d: int
    mean: float
    sd: float
    times: np.ndarray = field(repr=False)


@dataclass
class TimingReport:
    rows: list
    R: int
    scenario: ScenarioSpec
    seed: int

    def mean(self, method, d):
        for r in self.rows:
            if r.method == method and r.d == d:
                return r.mean
        raise KeyError((method, d))

    def to_text(self):
        ds = sorted({r.d for r in self.rows})
        methods = list(dict.fromkeys(r.method for r in self.rows))
        lines = [f"computing time (s), mean (sd) over R = {self.R}",
                 f"{'method':<8}" + "".join(f"{'d = ' + str(d):>22}" for d in ds)]
        for m in methods:
            cells = []
            for d in ds:
                row = next(r for r in self.rows if r.method == m and r.d == d)
                cells.append(f"{row.mean:.4f} ({row.sd:.4f})")
            lines.append(f"{m:<8}" + "".join(f"{c:>22}" for c in cells))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "d", "mean", "sd"])
        for r in self.rows:
            w.writerow([r.method, r.d, repr(r.mean), repr(r.sd)])
        return buf.getvalue()


def _time_method(method, data, spec, n_grid, exact):
    family = get_family(spec.family)
    kernel = spec.kernel_spec()
    if method in L0_METHODS:
        return best_subset(data, family, kernel, method, n_grid=n_grid,
                           exact=exact).wall_time
    if method == "Oracle":
        start = time.perf_counter()
        oracle_fit(data, family, kernel, spec.true_support, n_grid, exact)
        return time.perf_counter() - start
    start = time.perf_counter()
    backfit(data, family, kernel, PenaltySpec(method.lower()), n_grid=n_grid, exact=exact)
    return time.perf_counter() - start


def run_timing_study(spec_base, d_values=(8, 9, 10), methods=("SCAD", "L1", "BIC"),
                     R=10, seed=0, n_grid=DEFAULT_GRID, exact=False) -> TimingReport:
    """Serial wall time of each method as ``d`` grows.

    Timings are always taken serially so that they are comparable.
    """
    methods = _normalize_methods(methods)
    rows = []
    for d in d_values:
        spec = spec_base.with_d(int(d))
        times = {m: [] for m in methods}
        for r in range(R):
            data = gen_scenario(spec, substream(seed, int(d), r))
            for m in methods:
                times[m].append(_time_method(m, data, spec, n_grid, exact))
        for m in methods:
            t = np.array(times[m])
            rows.append(TimingRow(m, int(d), float(t.mean()),
                                  float(t.std(ddof=1)) if R > 1 else 0.0, t))
    return TimingReport(rows, R, spec_base, seed)


# ----------------------------------------------------------------- GLRT power

@dataclass
class PowerReport:
    deltas: np.ndarray
    levels: np.ndarray
    power: np.ndarray          # (len(deltas), len(levels))
    statistics: np.ndarray = field(repr=False)     # (len(deltas), R)
    null_stats: np.ndarray = field(repr=False)
    df_fitted: float = math.nan
    R: int = 0
    B: int = 0
    n_failed: int = 0

    def power_at(self, delta, level):
        i = int(np.flatnonzero(np.isclose(self.deltas, delta))[0])
        j = int(np.flatnonzero(np.isclose(self.levels, level))[0])
        return float(self.power[i, j])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "level", "power"])
        for i, delta in enumerate(self.deltas):
            for j, level in enumerate(self.levels):
                w.writerow([repr(float(delta)), repr(float(level)),
                            repr(float(self.power[i, j]))])
        return buf.getvalue()

    def to_text(self):
        lines = [f"GLRT power, R = {self.R} per delta, B = {self.B} bootstrap draws; "
                 f"df of the fitted chi-square = {self.df_fitted:.4f}",
                 f"{'delta':>8}" + "".join(f"{'a = ' + format(a, 'g'):>12}"
                                            for a in self.levels)]
        for i, delta in enumerate(self.deltas):
            lines.append(f"{delta:>8.3g}" + "".join(f"{v:>12.4f}" for v in self.power[i]))
        return "\n".join(lines) + "\n"


def _statistic_replication(key, spec, seed, null_x, penalty, n_grid, exact):
    k, delta, r = key
    data = gen_scenario(spec.with_delta(delta, null_x[0]), substream(seed, 2, k, r))
    try:
        return glrt_statistic(data, spec.family, spec.kernel_spec(), null_x, penalty,
                              n_grid=n_grid, exact=exact).t_glr
    except GVCPLMError as exc:
        log.warning("power replication (delta=%g, r=%d) failed: %s", delta, r, exc)
        return np.nan


def null_reference(spec, B, seed, null_x=(1,), penalty=None, n_grid=DEFAULT_GRID,
                   exact=False, n_jobs=1):
    """Bootstrap null distribution of the statistic, from one ``delta = 0`` dataset."""
    null_spec = spec.with_delta(0.0, null_x[0])
    data = gen_scenario(null_spec, substream(seed, 0))
    return bootstrap_null(data, spec.family, spec.kernel_spec(), null_x, B,
                          seed=(int(seed), 1),
                          penalty=penalty, n_grid=n_grid, exact=exact, n_jobs=n_jobs)


def run_power_study(spec, delta_grid=(0, 0.4, 0.8, 1.2, 1.6, 2.0),
                    levels=(0.25, 0.1, 0.05, 0.01), R=100, bootstrap_B=200, seed=0,
                    null_x=(1,), penalty=None, n_grid=DEFAULT_GRID, exact=False,
                    n_jobs=1) -> PowerReport:
    """Rejection rates of the GLRT under ``alpha_j = delta * alpha_j^true``.

    The critical values come from one bootstrap null distribution computed on a
    ``delta = 0`` dataset; each replication then only needs the statistic.  A
    replication rejects at level ``a`` when its bootstrap p-value is ``<= a``.
    """
    levels = np.asarray(levels, dtype=float)
    deltas = np.asarray(delta_grid, dtype=float)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie in (0, 1)")
    if np.any(deltas < 0):
        raise ValueError("delta must be nonnegative")
    null_x = tuple(int(j) for j in null_x)
    ref = null_reference(spec, bootstrap_B, seed, null_x, penalty, n_grid, exact, n_jobs)
    keys = [(k, float(delta), r) for k, delta in enumerate(deltas) for r in range(R)]
    work = partial(_statistic_replication, spec=spec, seed=seed, null_x=null_x,
                   penalty=penalty, n_grid=n_grid, exact=exact)
    t = np.array(ordered_map(work, keys, n_jobs=n_jobs), dtype=float).reshape(len(deltas), R)
    n_failed = int(np.sum(~np.isfinite(t)))
    _check_failures(n_failed, t.size, "power")
    power = np.empty((len(deltas), len(levels)))
    for i in range(len(deltas)):
        ti = t[i][np.isfinite(t[i])]
        pv = np.array([bootstrap_pvalue(v, ref.bootstrap_stats) for v in ti])
        power[i] = [(pv <= a).mean() for a in levels]
    return PowerReport(deltas, levels, power, t, ref.bootstrap_stats, ref.df_fitted, R,
                       bootstrap_B, n_failed)


def ks_to_chi2(sample, df=None):
    """Kolmogorov-Smirnov distance between ``sample`` and chi-square(df);
    ``df`` defaults to the sample mean."""
    sample = np.asarray(sample, dtype=float)
    df = float(np.mean(sample)) if df is None else float(df)
    return float(stats.kstest(sample, stats.chi2(df).cdf).statistic)


# ----------------------------------------------------------------- RASE

@dataclass
class RaseReport:
    rase_backfit: np.ndarray
    rase_true_beta: np.ndarray
    R: int
    n_failed: int = 0

    @property
    def ratio(self):
        return self.rase_backfit / self.rase_true_beta

    @property
    def median_ratio(self):
        return float(np.median(self.ratio))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rase_true_beta", "rase_backfit"])
        for a, b in zip(self.rase_true_beta, self.rase_backfit):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _rase_replication(r, spec, seed, penalty, n_grid):
    data = gen_scenario(spec, substream(seed, r))
    family = get_family(spec.family)
    kernel = spec.kernel_spec()
    try:
        fit = backfit(data, family, kernel, penalty, n_grid=n_grid)
        known = alpha_on_grid(data, family, kernel, beta=np.asarray(spec.beta_true),
                              n_grid=n_grid)
    except GVCPLMError as exc:
        log.warning("RASE replication %d failed: %s", r, exc)
        return np.nan, np.nan
    return rase(fit.alpha_curves, spec.true_alpha), rase(known, spec.true_alpha)


def run_rase_study(spec, R=100, seed=0, penalty="scad", n_grid=DEFAULT_GRID,
                   n_jobs=1) -> RaseReport:
    """RASE of ``alpha`` from the backfitting estimate against the fit that
    knows the true ``beta``."""
    penalty = PenaltySpec(penalty) if isinstance(penalty, str) else penalty
    work = partial(_rase_replication, spec=spec, seed=seed, penalty=penalty,
                   n_grid=n_grid)
    res = np.array(ordered_map(work, range(R), n_jobs=n_jobs), dtype=float)
    ok = np.all(np.isfinite(res), axis=1)
    n_failed = int(R - ok.sum())
    _check_failures(n_failed, R, "RASE")
    return RaseReport(res[ok, 0], res[ok, 1], R, n_failed)
