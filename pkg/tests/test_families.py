import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvcplm.errors import DataValidationError, DomainError
from gvcplm.families import deviance, get_family, quasi_loglik


def test_poisson_quasi_vanishes_at_saturation():
    y = np.array([0.5, 1.0, 7.0, 240.0])
    assert quasi_loglik("poisson", np.log(y), y) == pytest.approx(0.0, abs=1e-12)


def test_poisson_quasi_at_zero_response():
    assert quasi_loglik("poisson", np.array([0.0]), np.array([0.0])) == pytest.approx(-1.0)


def test_bernoulli_quasi_at_even_odds():
    val = quasi_loglik("bernoulli", np.array([0.0]), np.array([1.0]))
    assert val == pytest.approx(-np.log(2.0))


@pytest.mark.parametrize("family", ["gaussian", "poisson", "bernoulli"])
def test_deviance_zero_when_mean_equals_response(family):
    y = {"gaussian": np.array([-1.0, 0.3, 2.0]), "poisson": np.array([0.0, 1.0, 5.0]),
         "bernoulli": np.array([0.0, 1.0, 1.0])}[family]
    assert deviance(family, y, y) == pytest.approx(0.0, abs=1e-12)


def test_poisson_deviance_example():
    assert deviance("poisson", np.array([0.0]), np.array([1.0])) == pytest.approx(2.0)


def test_bernoulli_deviance_example():
    assert deviance("bernoulli", np.array([1.0]), np.array([0.5])) == \
        pytest.approx(2 * np.log(2.0))


def test_boundary_mean_raises_domain_error():
    with pytest.raises(DomainError):
        deviance("bernoulli", np.array([1.0]), np.array([0.0]))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        deviance("gaussian", np.zeros(2), np.zeros(3))


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown family"):
        get_family("gamma")


def test_invalid_responses_rejected():
    with pytest.raises(DataValidationError):
        get_family("poisson").validate_response(np.array([1.0, -1.0]))
    with pytest.raises(DataValidationError):
        get_family("bernoulli").validate_response(np.array([0.0, 2.0]))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["gaussian", "poisson", "bernoulli"]),
       st.floats(-3, 3), st.integers(0, 1))
def test_scores_are_derivatives_of_quasi(family, eta, y01):
    fam = get_family(family)
    y = float(y01) if family == "bernoulli" else (2.0 * y01 + 0.5)
    step = 1e-5

    def q(e):
        return float(fam.quasi(fam.linkinv(np.array([e])), np.array([y]))[0])

    fd1 = (q(eta + step) - q(eta - step)) / (2 * step)
    fd2 = (q(eta + step) - 2 * q(eta) + q(eta - step)) / step**2
    assert fam.q1(np.array([eta]), np.array([y]))[0] == pytest.approx(fd1, rel=1e-6, abs=1e-6)
    assert fam.q2(np.array([eta]), np.array([y]))[0] == pytest.approx(fd2, rel=1e-3, abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["gaussian", "poisson", "bernoulli"]),
       st.lists(st.floats(-4, 4), min_size=1, max_size=6), st.data())
def test_deviance_nonnegative(family, etas, data):
    fam = get_family(family)
    mu = fam.linkinv(np.array(etas))
    if family == "bernoulli":
        y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(etas),
                                        max_size=len(etas))), dtype=float)
    else:
        y = np.array(data.draw(st.lists(st.integers(0, 20), min_size=len(etas),
                                        max_size=len(etas))), dtype=float)
    assert deviance(fam, y, mu) >= -1e-12
