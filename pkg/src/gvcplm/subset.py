"""Best-subset selection with the L0 penalty, and the oracle fit.

With ``p_lambda(|beta|) = 0.5 lambda^2 I(beta != 0)`` the penalized
likelihood of a submodel at its maximizer is ``l_S - 0.5 n lambda^2 |S|``;
AIC, BIC and RIC correspond to particular choices of ``lambda``.  Every
subset refits the whole semiparametric model, including the local estimate of
``alpha``, which is what makes the search exponential in ``d``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import ordered_map
from .errors import ConvergenceError, DataValidationError, GVCPLMError
from .estimator import SemiFit, fit_penalized, fit_unpenalized
from .families import get_family
from .penalties import PenaltySpec
from .smoother import DEFAULT_GRID

log = logging.getLogger(__name__)


def criterion_lambda(criterion: str, n: int, d: int) -> float:
    """L0 tuning parameter reproducing AIC, BIC or RIC."""
    criterion = criterion.upper()
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    if criterion == "AIC":
        return float(np.sqrt(2.0 / n))
    if criterion == "BIC":
        return float(np.sqrt(np.log(n) / n))
    if criterion == "RIC":
        return float(np.sqrt(2.0 * np.log(d) / n))
    raise ValueError(f"unknown criterion {criterion!r}; expected AIC, BIC or RIC")


def mask_columns(mask: int, d: int):
    return tuple(j for j in range(d) if mask >> j & 1)


@dataclass
class SubsetResult:
    best_subset: tuple
    criterion_value: float
    fit: SemiFit
    subsets_evaluated: int
    wall_time: float
    criterion: str = ""
    lam: float = 0.0
    n_failed: int = 0
    trace: list = field(default_factory=list, repr=False)


def _subset_loglik(mask, data, family, kernel, n_grid, exact):
    cols = mask_columns(mask, data.d)
    try:
        return fit_unpenalized(data.select_z(cols), family, kernel, n_grid, exact).loglik
    except GVCPLMError as exc:
        log.info("subset %s failed: %s", cols, exc)
        return -np.inf


def expand_fit(fit: SemiFit, columns, d) -> SemiFit:
    """Embed a fit on a column subset of ``z`` into the full ``d`` coordinates."""
    columns = list(columns)
    beta = np.zeros(d)
    beta[columns] = fit.beta_hat
    zero = np.ones(d, dtype=bool)
    zero[columns] = fit.zero_mask
    se = np.full(d, np.nan)
    se[columns] = fit.se
    lam = np.zeros(d)
    lam[columns] = fit.lambda_used
    fit.beta_hat, fit.zero_mask, fit.se, fit.lambda_used = beta, zero, se, lam
    fit.exempt = None
    return fit


@dataclass
class SubsetEnumeration:
    """Maximized quasi-likelihood of every subset, indexed by bitmask."""

    logliks: np.ndarray
    wall_time: float

    @property
    def n_failed(self):
        return int(np.sum(~np.isfinite(self.logliks)))


def enumerate_subsets(data, family, kernel, max_d=20, n_grid=DEFAULT_GRID, exact=False,
                      n_jobs=1) -> SubsetEnumeration:
    """Fit the unpenalized model on every subset of the columns of ``z``.

    Subsets are enumerated by binary counting (bit ``j`` selects column ``j``)
    and failed subsets score ``-inf``.  ``wall_time`` covers this loop only.
    """
    family = get_family(family)
    if data.d > max_d:
        raise DataValidationError(
            f"d = {data.d} exceeds the enumeration guard max_d = {max_d}")
    work = partial(_subset_loglik, data=data, family=family, kernel=kernel,
                   n_grid=n_grid, exact=exact)
    start = time.perf_counter()
    logliks = np.array(ordered_map(work, range(2**data.d), n_jobs=n_jobs), dtype=float)
    return SubsetEnumeration(logliks, time.perf_counter() - start)


def subset_scores(logliks, lam, n):
    """``l_S - 0.5 n lambda^2 |S|`` for every bitmask ``S``."""
    sizes = np.array([bin(m).count("1") for m in range(len(logliks))])
    return np.asarray(logliks) - 0.5 * n * lam**2 * sizes


def select_from_scores(logliks, lam, n):
    """Columns of the best subset; ties go to the lowest bitmask."""
    scores = subset_scores(logliks, lam, n)
    if not np.any(np.isfinite(scores)):
        raise ConvergenceError("every subset fit failed")
    d = int(round(np.log2(len(scores))))
    return mask_columns(int(np.argmax(scores)), d)


def best_subset(data, family, kernel, criterion="BIC", max_d=20, n_grid=DEFAULT_GRID,
                exact=False, n_jobs=1) -> SubsetResult:
    """Exhaustive search over all ``2^d`` subsets of the parametric covariates.

    Every subset refits the local joint estimate of ``alpha`` with its own
    columns.  ``wall_time`` is end-to-end for the scoring loop, so pass
    ``n_jobs=1`` for serial timings.
    """
    family = get_family(family)
    d = data.d
    lam = criterion_lambda(criterion, data.n, d) if d >= 1 else 0.0
    enum = enumerate_subsets(data, family, kernel, max_d, n_grid, exact, n_jobs)
    scores = subset_scores(enum.logliks, lam, data.n)
    cols = select_from_scores(enum.logliks, lam, data.n)
    best = sum(1 << j for j in cols)
    fit = fit_penalized(data.select_z(cols), family, kernel, PenaltySpec("none"), 0.0,
                        n_grid=n_grid, exact=exact)
    fit = expand_fit(fit, cols, d)
    fit.penalty = PenaltySpec("l0", lam)
    return SubsetResult(cols, float(scores[best]), fit, len(scores), enum.wall_time,
                        criterion.upper(), lam, enum.n_failed,
                        list(zip(range(len(scores)), scores.tolist())))


def write_trace_csv(result: SubsetResult, path):
    """Dump the criterion trace as ``(bitmask, subset, score)`` rows."""
    d = len(result.fit.beta_hat)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bitmask", "subset", "score"])
        for mask, score in result.trace:
            cols = " ".join(str(j + 1) for j in mask_columns(mask, d))
            w.writerow([mask, cols, repr(float(score))])


def oracle_fit(data, family, kernel, true_support, n_grid=DEFAULT_GRID,
               exact=False) -> SemiFit:
    """Unpenalized fit using only the columns of ``z`` in ``true_support``."""
    cols = sorted(set(int(j) for j in true_support))
    if cols and (cols[0] < 0 or cols[-1] >= data.d):
        raise ValueError("true_support must index columns of z")
    fit = fit_penalized(data.select_z(cols), get_family(family), kernel,
                        PenaltySpec("none"), 0.0, n_grid=n_grid, exact=exact)
    return expand_fit(fit, cols, data.d)
