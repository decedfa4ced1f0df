"""Acceptance suite.

Each test checks one acceptance criterion at its stated tolerance and prints a
single PASS/FAIL line (collected again in the pytest terminal summary).  The
Monte Carlo criteria run the desk-scale studies in full and take several
minutes each.
"""

import itertools
import json
import time

import numpy as np
import pytest
from scipy import integrate, stats

from gvcplm import cli
from gvcplm._parallel import substream
from gvcplm.bandwidth import select_bandwidth_cv
from gvcplm.data import Dataset
from gvcplm.estimator import fit_penalized, fit_unpenalized
from gvcplm.families import get_family
from gvcplm.glm import loglik_parts
from gvcplm.glrt import bootstrap_null
from gvcplm.kernels import kernel_constants, make_kernel
from gvcplm.penalties import PenaltySpec, penalty_deriv, penalty_value
from gvcplm.simulation import (gen_scenario, get_scenario, ks_to_chi2, null_reference,
                               run_power_study, run_rase_study, run_table1_study,
                               run_timing_study)
from gvcplm.smoother import fit_local_batch, local_fit_alpha, local_fit_joint
from gvcplm.subset import best_subset, criterion_lambda

EX41 = get_scenario("example41")


def _random_dataset(rng, family, n, p, d):
    u = rng.random(n)
    x = np.column_stack([np.ones(n)] + [rng.standard_normal(n) for _ in range(p - 1)])
    z = rng.standard_normal((n, d))
    eta = 0.3 * x.sum(axis=1) * np.sin(2 * u) + z @ rng.uniform(-0.4, 0.4, d)
    fam = get_family(family)
    y = fam.sample(fam.linkinv(eta), rng)
    return Dataset(u, x, z, y)


def _local_objective(family, data, kernel, u0, theta, offset):
    # kernel-weighted quasi-likelihood in the (a, h b, beta) parameterization
    p = data.p
    t = (data.u - u0) / kernel.h
    w = kernel(t) / kernel.h
    D = np.column_stack([data.x, data.x * t[:, None], data.z])[:, :len(theta)]
    eta = D @ theta + offset
    return float(np.sum(w * family.quasi(family.linkinv(eta), data.y))), D, w, p


def test_criterion_01_gaussian_local_fit_equals_weighted_least_squares(report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(60, 201))
        p = int(rng.integers(1, 4))
        d = int(rng.integers(0, 6))
        data = _random_dataset(rng, "gaussian", n, p, d)
        kernel = make_kernel("epanechnikov", float(rng.uniform(0.25, 0.5)))
        u0 = float(rng.uniform(0.2, 0.8))
        w = kernel.scaled(data.u - u0)
        sw = np.sqrt(w)
        X_loc = np.column_stack([data.x, data.x * (data.u - u0)[:, None]])
        # joint fit: (a, b, beta) by weighted least squares
        if d > 0:
            D = np.column_stack([X_loc, data.z])
            coef = np.linalg.lstsq(D * sw[:, None], data.y * sw, rcond=None)[0]
            fit = local_fit_joint(data, "gaussian", kernel, u0)
            got = np.concatenate([fit.a, fit.b, fit.beta_local])
            worst = max(worst, np.max(np.abs(got - coef)) / (1 + np.max(np.abs(coef))))
        # beta fixed: regression of y - z beta on the local design
        beta = rng.uniform(-1, 1, d)
        coef = np.linalg.lstsq(X_loc * sw[:, None], (data.y - data.z @ beta) * sw,
                               rcond=None)[0]
        fit = local_fit_alpha(data, "gaussian", kernel, u0, beta)
        got = np.concatenate([fit.a, fit.b])
        worst = max(worst, np.max(np.abs(got - coef)) / (1 + np.max(np.abs(coef))))
    elapsed = time.perf_counter() - start
    report(1, "Gaussian local fits = weighted least squares",
           worst <= 1e-10 and elapsed < 10,
           f"max rel. deviation {worst:.2e} (tol 1e-10) over 50 instances, {elapsed:.1f} s")


def _fd_grad(f, x, step=1e-6):
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = step * max(1.0, abs(x[j]))
        g[j] = (f(x + e) - f(x - e)) / (2 * e[j])
    return g


def test_criterion_02_gradients_match_finite_differences(report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = {}
    for family in ("gaussian", "poisson", "bernoulli"):
        fam = get_family(family)
        err = 0.0
        for _ in range(100):
            n, p, d = 80, 2, 3
            data = _random_dataset(rng, family, n, p, d)
            offset = 0.2 * np.sin(3 * data.u)
            beta = rng.uniform(-0.5, 0.5, d)
            # global score of the quasi-likelihood in beta
            _, grad, _ = loglik_parts(fam, data.z, data.y, offset, beta)
            fd = _fd_grad(lambda b: loglik_parts(fam, data.z, data.y, offset, b)[0], beta)
            err = max(err, np.max(np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))))
            # local score at a random point, joint parameterization
            kernel = make_kernel("epanechnikov", 0.3)
            u0 = float(rng.uniform(0.25, 0.75))
            theta = rng.uniform(-0.4, 0.4, 2 * p + d)
            batch = fit_local_batch(data, fam, kernel, [u0], joint=True, theta0=theta,
                                    max_iter=0)
            zero = np.zeros(n)
            fd = _fd_grad(lambda th: _local_objective(fam, data, kernel, u0, th, zero)[0],
                          theta)
            err = max(err, np.max(np.abs(batch.score[0] - fd)
                                  / np.maximum(1.0, np.abs(fd))))
        worst[family] = err
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-5 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, "analytic scores = central differences", ok,
           f"max rel. error {detail} (tol 1e-5), 100 points per family, {elapsed:.1f} s")


def test_criterion_03_penalty_exactness(report):
    problems = []
    rng = np.random.default_rng(303)
    jump = 0.0
    for _ in range(200):
        lam = float(rng.uniform(0.01, 3.0))
        a = float(rng.uniform(2.1, 6.0))
        p = PenaltySpec("scad", lam, a=a)
        for knot in (lam, a * lam):
            left, right = np.nextafter(knot, 0), np.nextafter(knot, np.inf)
            jump = max(jump, abs(penalty_value(p, left) - penalty_value(p, right)),
                       abs(penalty_deriv(p, left) - penalty_deriv(p, right)))
    if jump > 1e-12:
        problems.append(f"knot jump {jump:.1e}")
    p = PenaltySpec("scad", 0.1, a=3.7)
    for beta, want in ((0.05, 0.1), (0.2, 0.1 * (0.37 - 0.2) / 0.27), (0.5, 0.0)):
        if abs(penalty_deriv(p, beta) - want) > 1e-12:
            problems.append(f"p'({beta}) = {penalty_deriv(p, beta)}")
    if abs(penalty_value(p, 1.0) - 0.0235) > 1e-12:
        problems.append("SCAD value beyond a lambda")
    n, d = 200, 10
    formula = {"AIC": np.sqrt(2 / n), "BIC": np.sqrt(np.log(n) / n),
               "RIC": np.sqrt(2 * np.log(d) / n)}
    printed = {"AIC": 0.1, "BIC": 0.16280, "RIC": 0.15174}
    lams = {c: criterion_lambda(c, n, d) for c in formula}
    for c in formula:
        if abs(lams[c] - formula[c]) > 1e-6:
            problems.append(f"{c} lambda {lams[c]} vs formula {formula[c]}")
    # the quoted five-decimal constants are shown for comparison; the quoted
    # BIC value 0.16280 does not equal sqrt(log(200)/200) = 0.1627624
    quoted = ", ".join(f"{c} {lams[c] - printed[c]:+.1e}" for c in printed)
    report(3, "penalty exactness", not problems,
           f"knot jump {jump:.1e} (tol 1e-12); SCAD derivative/value examples exact; "
           "lambdas " + " / ".join(f"{c} {v:.7f}" for c, v in lams.items())
           + f" match their formulas to 1e-6; difference to quoted constants: {quoted}"
           + ("; " + "; ".join(problems) if problems else ""))


def test_criterion_04_epanechnikov_constants(report):
    kern = make_kernel("epanechnikov", 1.0)
    closed = kernel_constants(kern, "closed")
    quad = kernel_constants(kern, "quadrature")
    want = (0.75, 0.6, 0.2, 0.9)
    dev = max(max(abs(c - w), abs(q - w)) for c, q, w in
              zip((closed.k0, closed.nu0, closed.mu2, closed.r_K),
                  (quad.k0, quad.nu0, quad.mu2, quad.r_K), want))
    report(4, "Epanechnikov constants", dev <= 1e-12,
           f"k0 {closed.k0}, nu0 {closed.nu0}, mu2 {closed.mu2}, r_K {closed.r_K}; "
           f"closed/quadrature max deviation {dev:.1e} (tol 1e-12)")


@pytest.mark.slow
def test_criterion_05_table1_orderings(report):
    start = time.perf_counter()
    rep = run_table1_study(EX41, ("SCAD", "L1", "Oracle"), R=100, seed=41)
    elapsed = time.perf_counter() - start
    scad, l1, oracle = rep.row("SCAD"), rep.row("L1"), rep.row("Oracle")
    checks = {
        "Oracle <= SCAD": oracle.rgmse_median <= scad.rgmse_median,
        "SCAD < L1": scad.rgmse_median < l1.rgmse_median,
        "SCAD C in [6, 7]": 6.0 <= scad.c_avg <= 7.0,
        "I = 0": all(r.i_avg == 0 for r in rep.rows),
        "time <= 15 min": elapsed <= 900,
    }
    failed = [k for k, v in checks.items() if not v]
    report(5, "selection study orderings (Poisson, R = 100)", not failed,
           f"median RGMSE Oracle {oracle.rgmse_median:.4f}, SCAD {scad.rgmse_median:.4f}, "
           f"L1 {l1.rgmse_median:.4f}; C SCAD {scad.c_avg:.2f}, L1 {l1.c_avg:.2f}; "
           f"I {[r.i_avg for r in rep.rows]}; {rep.n_failed} failed reps; "
           f"{elapsed:.0f} s" + (f"; failed: {failed}" if failed else ""))


@pytest.mark.slow
def test_criterion_06_table2_timing_shape(report):
    start = time.perf_counter()
    rep = run_timing_study(EX41, (8, 9, 10), ("SCAD", "BIC"), R=10, seed=42)
    elapsed = time.perf_counter() - start
    bic = [rep.mean("BIC", d) for d in (8, 9, 10)]
    scad = [rep.mean("SCAD", d) for d in (8, 9, 10)]
    growth = [bic[1] / bic[0], bic[2] / bic[1]]
    ratio = scad[2] / scad[0]
    ok = min(growth) >= 1.6 and ratio <= 2 and elapsed <= 1200
    report(6, "timing shape over d (R = 10)", ok,
           f"BIC means {[round(t, 3) for t in bic]} s, growth {[round(g, 2) for g in growth]} "
           f"(>= 1.6); SCAD means {[round(t, 3) for t in scad]} s, t(10)/t(8) = "
           f"{ratio:.2f} (<= 2); {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_07_glrt_calibration(report):
    start = time.perf_counter()
    rep = run_power_study(EX41, (0.0,), (0.05,), R=200, bootstrap_B=200, seed=43)
    size = rep.power_at(0.0, 0.05)
    ref = null_reference(EX41, 1000, seed=44)
    ks = ks_to_chi2(ref.bootstrap_stats)
    elapsed = time.perf_counter() - start
    # diagnostic only: the same sample rescaled by the Wilks constant whose
    # denominator is int (K - 0.5 K*K)^2 instead of int (K - 0.5 K*K)
    st = ref.bootstrap_stats
    ks_sq = ks_to_chi2(st * _wilks_rk_squared() / kernel_constants(EX41.kernel_spec()).r_K)
    ok = 0.02 <= size <= 0.10 and ks <= 0.08 and elapsed <= 1200
    report(7, "GLRT calibration", ok,
           f"rejection rate at 0.05 = {size:.3f} (R = 200, B = 200, band [0.02, 0.10]); "
           f"KS to chi-square(df = {ref.df_fitted:.3f}) = {ks:.4f} at B = 1000 "
           f"(<= 0.08); null var/mean = {st.var() / st.mean():.2f} (chi-square: 2); "
           f"diagnostic KS with squared-denominator r_K = {ks_sq:.4f}; {elapsed:.0f} s")


def _wilks_rk_squared():
    k = make_kernel("epanechnikov", 1.0)

    def conv(t):
        return integrate.quad(lambda s: k(s) * k(t - s), max(-1, t - 1), min(1, t + 1))[0]

    den = integrate.quad(lambda t: (k(t) - 0.5 * conv(t)) ** 2, -2, 2, limit=200)[0]
    c = kernel_constants(k)
    return (c.k0 - 0.5 * c.nu0) / den


@pytest.mark.slow
def test_criterion_08_power_monotone(report):
    deltas = (0.0, 0.4, 0.8, 1.2, 1.6, 2.0)
    rep = run_power_study(EX41, deltas, (0.05,), R=100, bootstrap_B=200, seed=45)
    power = rep.power[:, 0]
    rho = stats.spearmanr(deltas, power).statistic
    ok = rho > 0.9 and rep.power_at(2.0, 0.05) > 0.9
    # diagnostic only: the same study on a finer grid below saturation
    fine = (0.0, 0.03, 0.06, 0.09, 0.12, 0.15)
    rep_f = run_power_study(EX41, fine, (0.05,), R=100, bootstrap_B=200, seed=46)
    rho_f = stats.spearmanr(fine, rep_f.power[:, 0]).statistic
    report(8, "power monotone in delta", ok,
           f"power at 0.05 {np.round(power, 3).tolist()}, Spearman {rho:.3f} (> 0.9), "
           f"power(2.0) = {power[-1]:.3f} (> 0.9), nondecreasing: "
           f"{bool(np.all(np.diff(power) >= 0))}; [diagnostic] delta {list(fine)}: power "
           f"{np.round(rep_f.power[:, 0], 3).tolist()}, Spearman {rho_f:.3f}")


@pytest.mark.slow
def test_criterion_09_backfit_rase_ratio(report):
    rep = run_rase_study(EX41, R=100, seed=47)
    med = rep.median_ratio
    report(9, "backfit RASE adequacy", 0.8 <= med <= 1.25,
           f"median RASE(backfit) / RASE(true beta) = {med:.4f} over "
           f"{len(rep.ratio)} replications (band [0.8, 1.25])")


def test_criterion_10_lambda_zero_and_reenumeration(report):
    rng = np.random.default_rng(1010)
    kernel = make_kernel("epanechnikov", 0.3)
    worst = 0.0
    for family in ("gaussian", "poisson", "bernoulli"):
        data = _random_dataset(rng, family, 200, 2, 4)
        unpen = fit_unpenalized(data, family, kernel)
        for kind in ("scad", "l1", "lq"):
            fit = fit_penalized(data, family, kernel, PenaltySpec(kind), 0.0)
            worst = max(worst, np.max(np.abs(fit.beta_hat - unpen.beta_u)))
    agree = 0
    for k in range(20):
        data = _random_dataset(substream(1010, k), "poisson", 120, 2, 4)
        crit = ("AIC", "BIC", "RIC")[k % 3]
        lam = criterion_lambda(crit, data.n, data.d)
        best, best_score = None, -np.inf
        for size in range(5):
            for cols in itertools.combinations(range(4), size):
                ll = fit_unpenalized(data.select_z(cols), "poisson", kernel).loglik
                score = ll - 0.5 * data.n * lam**2 * size
                if score > best_score:
                    best, best_score = cols, score
        agree += best_subset(data, "poisson", kernel, crit).best_subset == best
    report(10, "lambda = 0 consistency and re-enumeration", worst <= 1e-8 and agree == 20,
           f"max |beta(lambda=0) - beta_unpenalized| = {worst:.1e} (tol 1e-8); "
           f"best subset agrees with brute force on {agree}/20 instances")


def _tree_equal(a, b):
    return json.dumps(a, sort_keys=True, default=repr) == \
        json.dumps(b, sort_keys=True, default=repr)


def test_criterion_11_determinism(report, tmp_path):
    spec = EX41
    kernel = spec.kernel_spec()
    data = gen_scenario(spec.with_d(4), substream(11))
    checks = {}
    b1 = bootstrap_null(data, "poisson", kernel, (1,), 6, seed=5, n_jobs=1)
    b2 = bootstrap_null(data, "poisson", kernel, (1,), 6, seed=5, n_jobs=2)
    checks["bootstrap"] = np.array_equal(b1.bootstrap_stats, b2.bootstrap_stats)
    t1 = run_table1_study(spec.with_d(4), ("SCAD", "BIC", "Oracle"), R=3, seed=9, n_jobs=1)
    t2 = run_table1_study(spec.with_d(4), ("SCAD", "BIC", "Oracle"), R=3, seed=9, n_jobs=2)
    checks["table1"] = _tree_equal(t1.to_dict(), t2.to_dict())
    c1 = select_bandwidth_cv(data, "poisson", kernel, (0.15, 0.25), 4, seed=3, n_jobs=1)
    c2 = select_bandwidth_cv(data, "poisson", kernel, (0.15, 0.25), 4, seed=3, n_jobs=2)
    checks["bandwidth"] = np.array_equal(c1.cv_scores, c2.cv_scores)
    p1 = run_power_study(spec, (0.0, 0.1), (0.05,), R=3, bootstrap_B=5, seed=2, n_jobs=1)
    p2 = run_power_study(spec, (0.0, 0.1), (0.05,), R=3, bootstrap_B=5, seed=2, n_jobs=2)
    checks["power"] = np.array_equal(p1.statistics, p2.statistics)
    outs = []
    for k, threads in enumerate((1, 2, 1)):
        out = tmp_path / f"run{k}"
        code = cli.main(["simulate", "--scenario", "example41", "--methods", "scad,oracle",
                         "--reps", "2", "--seed", "7", "--threads", str(threads),
                         "--out", str(out)])
        doc = json.loads((out / "result.json").read_text())
        doc["config"]["run"].pop("output")
        doc["config"]["run"].pop("threads")
        outs.append((code, json.dumps(doc, sort_keys=True), (out / "table.csv").read_bytes()))
    raw = [(tmp_path / f"run{k}" / "result.json").read_bytes() for k in (0, 2)]
    checks["cli"] = outs[0] == outs[1] == outs[2] and outs[0][0] == 0
    checks["cli bytes"] = raw[0].replace(b"run0", b"run2") == raw[1]
    failed = [k for k, v in checks.items() if not v]
    report(11, "determinism across runs and thread counts", not failed,
           f"checked {', '.join(checks)}" + (f"; differing: {failed}" if failed else ""))
