import numpy as np
import pytest

from gvcplm.data import Dataset
from gvcplm.errors import InsufficientWindowError
from gvcplm.kernels import make_kernel
from gvcplm.smoother import (CoefficientCurves, alpha_at_observations, alpha_on_grid,
                             fit_local_batch, local_fit_alpha, local_fit_joint, make_grid)


def _data(rng, n=150, p=2, d=2, family="gaussian"):
    u = rng.random(n)
    x = np.column_stack([np.ones(n)] + [rng.standard_normal(n) for _ in range(p - 1)])
    z = rng.standard_normal((n, d))
    eta = 0.5 + 0.4 * np.sin(3 * u) * x[:, -1] + z @ np.linspace(0.3, -0.3, d)
    if family == "gaussian":
        y = eta + 0.3 * rng.standard_normal(n)
    else:
        y = rng.poisson(np.exp(eta)).astype(float)
    return Dataset(u, x, z, y)


def test_constant_gaussian_response():
    rng = np.random.default_rng(0)
    n = 80
    data = Dataset(rng.random(n), np.ones((n, 1)), np.empty((n, 0)), np.full(n, 3.25))
    fit = local_fit_joint(data, "gaussian", make_kernel("epanechnikov", 0.3), 0.5)
    assert fit.a == pytest.approx([3.25], abs=1e-12)
    assert fit.b == pytest.approx([0.0], abs=1e-10)
    curves = alpha_on_grid(data, "gaussian", make_kernel("epanechnikov", 0.3), n_grid=25)
    assert np.allclose(curves.values, 3.25, atol=1e-12)


def test_constant_poisson_quasi_response():
    rng = np.random.default_rng(1)
    n = 100
    data = Dataset(rng.random(n), np.ones((n, 1)), np.empty((n, 0)), np.full(n, np.exp(2.0)))
    fit = local_fit_joint(data, "poisson", make_kernel("epanechnikov", 0.3), 0.4)
    assert fit.converged
    assert fit.a == pytest.approx([2.0], abs=1e-8)
    assert fit.b == pytest.approx([0.0], abs=1e-7)


def test_gaussian_offset_fit_is_weighted_least_squares():
    rng = np.random.default_rng(2)
    data = _data(rng)
    kern = make_kernel("epanechnikov", 0.35)
    beta = np.array([0.7, -1.1])
    u0 = 0.37
    sw = np.sqrt(kern.scaled(data.u - u0))
    design = np.column_stack([data.x, data.x * (data.u - u0)[:, None]])
    coef = np.linalg.lstsq(design * sw[:, None], (data.y - data.z @ beta) * sw,
                           rcond=None)[0]
    fit = local_fit_alpha(data, "gaussian", kern, u0, beta)
    assert np.concatenate([fit.a, fit.b]) == pytest.approx(coef, abs=1e-10)


def test_no_parametric_part_matches_joint():
    rng = np.random.default_rng(3)
    data = _data(rng, d=0, family="poisson")
    kern = make_kernel("epanechnikov", 0.3)
    a = local_fit_alpha(data, "poisson", kern, 0.6, np.empty(0))
    b = local_fit_joint(data, "poisson", kern, 0.6)
    assert a.a == pytest.approx(b.a, abs=1e-12)
    assert a.b == pytest.approx(b.b, abs=1e-12)


def test_fixed_beta_at_joint_estimate_reproduces_joint_a():
    rng = np.random.default_rng(4)
    data = _data(rng, family="poisson")
    kern = make_kernel("epanechnikov", 0.3)
    joint = local_fit_joint(data, "poisson", kern, 0.5)
    fixed = local_fit_alpha(data, "poisson", kern, 0.5, joint.beta_local)
    assert fixed.a == pytest.approx(joint.a, abs=1e-7)


def test_local_score_vanishes_at_solution():
    rng = np.random.default_rng(5)
    data = _data(rng, family="poisson")
    batch = fit_local_batch(data, "poisson", make_kernel("epanechnikov", 0.3),
                            np.linspace(0.2, 0.8, 7), joint=True)
    assert batch.converged.all()
    assert np.max(np.abs(batch.score)) < 1e-6


def test_grid_endpoints():
    rng = np.random.default_rng(6)
    data = _data(rng)
    assert make_grid(data, 2) == pytest.approx([data.omega_lo, data.omega_hi])
    with pytest.raises(ValueError):
        make_grid(data, 1)


def test_sparse_window_raises():
    rng = np.random.default_rng(7)
    data = _data(rng, n=40, d=3)
    with pytest.raises(InsufficientWindowError) as info:
        local_fit_joint(data, "gaussian", make_kernel("epanechnikov", 0.02), 0.5)
    assert info.value.u0 == pytest.approx(0.5)


def test_exact_and_grid_agree_closely():
    rng = np.random.default_rng(8)
    data = _data(rng, n=200)
    kern = make_kernel("epanechnikov", 0.3)
    exact, _ = alpha_at_observations(data, "gaussian", kern, beta=np.zeros(2), exact=True)
    interp, _ = alpha_at_observations(data, "gaussian", kern, beta=np.zeros(2), n_grid=400)
    assert np.max(np.abs(exact - interp)) < 1e-3


def test_curves_interpolate_and_write(tmp_path):
    curves = CoefficientCurves(np.array([0.0, 1.0]), np.array([[0.0, 1.0], [2.0, 1.0]]),
                               np.zeros((2, 2)))
    assert curves.at([0.25]) == pytest.approx(np.array([[0.5, 1.0]]))
    curves.to_csv(tmp_path / "c.csv", ["a", "b"])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == \
        "u,alpha_a,alpha_b,dalpha_a,dalpha_b"
    with pytest.raises(ValueError):
        CoefficientCurves(np.array([1.0, 0.0]), np.zeros((2, 1)), np.zeros((2, 1)))
