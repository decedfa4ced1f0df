import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvcplm.errors import BelowThresholdError, UnsupportedPenaltyError
from gvcplm.penalties import (PenaltySpec, lqa_value, lqa_weight, penalty_deriv,
                              penalty_value)

SCAD = PenaltySpec("scad", 0.1, a=3.7)


@pytest.mark.parametrize("kind", ["scad", "l1", "lq", "l0", "none"])
def test_penalty_vanishes_at_zero(kind):
    assert penalty_value(PenaltySpec(kind, 0.7), 0.0) == 0.0


def test_penalty_values():
    assert penalty_value(PenaltySpec("l1", 0.1), 0.2) == pytest.approx(0.02)
    assert penalty_value(SCAD, 1.0) == pytest.approx(0.0235, abs=1e-15)
    assert penalty_value(PenaltySpec("l0", 0.3), -2.0) == pytest.approx(0.045)
    assert penalty_value(PenaltySpec("lq", 0.2, q=0.5), 0.25) == pytest.approx(0.1)


@pytest.mark.parametrize("beta, want", [(0.05, 0.1), (0.2, 0.1 * 0.17 / 0.27), (0.5, 0.0)])
def test_scad_derivative_examples(beta, want):
    assert penalty_deriv(SCAD, beta) == pytest.approx(want, abs=1e-12)


def test_lqa_weights():
    assert lqa_weight(PenaltySpec("l1", 0.1), 0.2) == pytest.approx(0.5)
    assert lqa_weight(SCAD, 0.5) == 0.0


def test_lqa_l1_identity_at_expansion_point():
    p = PenaltySpec("l1", 0.1)
    assert lqa_value(p, 0.1, 0.1) == pytest.approx(penalty_value(p, 0.1), abs=1e-15)


def test_lqa_below_threshold_raises():
    with pytest.raises(BelowThresholdError):
        lqa_weight(SCAD, 1e-9)


def test_l0_has_no_derivative():
    with pytest.raises(UnsupportedPenaltyError):
        penalty_deriv(PenaltySpec("l0", 0.1), 0.3)


@pytest.mark.parametrize("kwargs", [dict(kind="bridge"), dict(lam=-1.0),
                                    dict(kind="scad", a=2.0), dict(kind="lq", q=1.5),
                                    dict(zero_threshold=0.0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PenaltySpec(**kwargs)


def test_vector_lambda_broadcasts():
    p = PenaltySpec("scad", np.array([0.1, 1.0]))
    assert penalty_deriv(p, np.array([0.2, 0.2])) == pytest.approx([0.1 * 0.17 / 0.27, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 5), st.floats(2.05, 8))
def test_scad_continuous_at_knots(lam, a):
    p = PenaltySpec("scad", lam, a=a)
    for knot in (lam, a * lam):
        lo, hi = np.nextafter(knot, 0), np.nextafter(knot, np.inf)
        assert abs(penalty_value(p, lo) - penalty_value(p, hi)) < 1e-12
        assert abs(penalty_deriv(p, lo) - penalty_deriv(p, hi)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 3), st.floats(2.05, 8),
       st.lists(st.floats(0, 50), min_size=2, max_size=10))
def test_scad_nondecreasing_concave_and_bounded(lam, a, betas):
    p = PenaltySpec("scad", lam, a=a)
    b = np.sort(np.array(betas))
    v = penalty_value(p, b)
    d = penalty_deriv(p, b)
    assert np.all(np.diff(v) >= -1e-12)
    assert np.all(np.diff(d) <= 1e-12)
    assert np.all(v <= (a + 1) * lam**2 / 2 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 2), st.floats(0.01, 5))
def test_scad_value_is_integral_of_derivative(lam, beta):
    p = PenaltySpec("scad", lam, a=3.7)
    t = np.linspace(0, beta, 4001)
    assert penalty_value(p, beta) == pytest.approx(np.trapezoid(penalty_deriv(p, t), t),
                                                   abs=1e-6 * (1 + lam))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 2), st.floats(0.01, 3), st.floats(-3, 3))
def test_lqa_majorizes_concave_penalties(lam, beta0, beta):
    for p in (PenaltySpec("scad", lam), PenaltySpec("l1", lam)):
        assert lqa_value(p, beta, beta0) >= penalty_value(p, beta) - 1e-10
