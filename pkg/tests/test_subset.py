import math

import numpy as np
import pytest

from gvcplm._parallel import substream
from gvcplm.errors import DataValidationError
from gvcplm.estimator import fit_unpenalized
from gvcplm.simulation import gen_scenario, get_scenario
from gvcplm.subset import (best_subset, criterion_lambda, enumerate_subsets, oracle_fit,
                           subset_scores, write_trace_csv)

EX41 = get_scenario("example41")


def test_criterion_lambda_arithmetic():
    assert criterion_lambda("AIC", 200, 10) == pytest.approx(0.1, abs=1e-12)
    assert criterion_lambda("bic", 200, 10) == pytest.approx(math.sqrt(math.log(200) / 200))
    assert criterion_lambda("RIC", 200, 10) == pytest.approx(math.sqrt(2 * math.log(10) / 200))
    assert criterion_lambda("RIC", 200, 10) == pytest.approx(0.15174, abs=5e-6)
    for bad in (("AIC", 1, 3), ("AIC", 10, 0), ("XIC", 10, 3)):
        with pytest.raises(ValueError):
            criterion_lambda(*bad)


def test_aic_charges_one_per_coefficient():
    n = 200
    lam = criterion_lambda("AIC", n, 3)
    assert n * 0.5 * lam**2 == pytest.approx(1.0)
    ll = np.array([-10.0, -8.0, -9.5, -7.2])
    assert subset_scores(ll, lam, n) == pytest.approx(ll - np.array([0, 1, 1, 2]))


@pytest.fixture(scope="module")
def small():
    return gen_scenario(EX41.with_d(3), substream(51))


def test_exhaustive_search(small, tmp_path):
    res = best_subset(small, "poisson", EX41.kernel_spec(), "BIC")
    assert res.subsets_evaluated == 8 and len(res.trace) == 8
    assert res.criterion_value == max(s for _, s in res.trace)
    assert res.fit.penalty.kind == "l0"
    assert np.all(res.fit.zero_mask == ~np.isin(np.arange(3), res.best_subset))
    path = tmp_path / "trace.csv"
    write_trace_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bitmask,subset,score" and len(lines) == 9
    assert lines[4].startswith("3,1 2,")


def test_empty_parametric_part(small):
    res = best_subset(small.select_z([]), "poisson", EX41.kernel_spec(), "AIC")
    assert res.best_subset == () and res.subsets_evaluated == 1


def test_guard(small):
    with pytest.raises(DataValidationError):
        enumerate_subsets(small, "poisson", EX41.kernel_spec(), max_d=2)


def test_oracle_extremes(small):
    kern = EX41.kernel_spec()
    full = oracle_fit(small, "poisson", kern, range(3))
    unpen = fit_unpenalized(small, "poisson", kern)
    assert full.beta_hat == pytest.approx(unpen.beta_u, abs=1e-8)
    empty = oracle_fit(small, "poisson", kern, [])
    assert np.all(empty.beta_hat == 0) and empty.zero_mask.all()
    alone = fit_unpenalized(small.select_z([]), "poisson", kern)
    assert empty.alpha_tilde == pytest.approx(alone.alpha_tilde, abs=1e-8)
    with pytest.raises(ValueError):
        oracle_fit(small, "poisson", kern, [3])


@pytest.mark.slow
def test_bic_recovers_example41_support():
    hits = 0
    for r in range(5):
        data = gen_scenario(EX41, substream(52, r))
        hits += best_subset(data, "poisson", EX41.kernel_spec(), "BIC").best_subset \
            == EX41.true_support
    assert hits >= 3, f"true support selected in {hits} of 5 runs"
