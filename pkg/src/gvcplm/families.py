"""Quasi-likelihood families.

A family bundles the inverse link, the variance function and the
quasi-likelihood

    Q(mu, y) = int_mu^y (s - y) / V(s) ds,

stored in its normalized form so that ``Q(y, y) = 0`` and the deviance is
simply ``-2 Q``.  Any dispersion parameter is absorbed into ``V``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, xlogy

from .errors import DataValidationError, DomainError


class QuasiFamily:
    """Base class.  Subclasses supply the link pieces, ``V`` and ``Q``.

    ``q1`` and ``q2`` follow the generic formulas with
    ``rho_l(eta) = mu'(eta)**l / V(mu(eta))``; canonical-link families
    override them with the simplified closed forms.
    """

    name = "quasi"
    eta_bound = np.inf
    canonical = False

    def clamp(self, eta):
        eta = np.asarray(eta, dtype=float)
        if np.isfinite(self.eta_bound):
            return np.clip(eta, -self.eta_bound, self.eta_bound)
        return eta

    def is_clamped(self, eta):
        """True when any linear predictor lies beyond the overflow guard."""
        return bool(np.any(np.abs(np.asarray(eta)) > self.eta_bound))

    # subclasses implement: link, linkinv, mu_eta, mu_eta2, variance,
    # variance_deriv, quasi, validate_response, sample

    def rho(self, eta, order):
        mu = self.linkinv(eta)
        return self.mu_eta(eta) ** order / self.variance(mu)

    def rho1_deriv(self, eta):
        mu = self.linkinv(eta)
        d1 = self.mu_eta(eta)
        v = self.variance(mu)
        return (self.mu_eta2(eta) * v - d1 * d1 * self.variance_deriv(mu)) / v**2

    def q1(self, eta, y):
        """Score of Q(g^{-1}(eta), y) with respect to eta."""
        return (y - self.linkinv(eta)) * self.rho(eta, 1)

    def q2(self, eta, y):
        """Second derivative of Q(g^{-1}(eta), y) with respect to eta."""
        return (y - self.linkinv(eta)) * self.rho1_deriv(eta) - self.rho(eta, 2)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class Gaussian(QuasiFamily):
    name = "gaussian"
    canonical = True

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def linkinv(self, eta):
        return np.asarray(eta, dtype=float)

    def mu_eta(self, eta):
        return np.ones_like(np.asarray(eta, dtype=float))

    def mu_eta2(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float))

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def variance_deriv(self, mu):
        return np.zeros_like(np.asarray(mu, dtype=float))

    def quasi(self, mu, y):
        return -0.5 * (y - mu) ** 2

    def q1(self, eta, y):
        return y - eta

    def q2(self, eta, y):
        return -np.ones(np.broadcast(eta, y).shape)

    def validate_response(self, y):
        pass

    def sample(self, mu, rng, scale=1.0):
        return mu + np.sqrt(scale) * rng.standard_normal(np.shape(mu))


class Poisson(QuasiFamily):
    name = "poisson"
    eta_bound = 700.0
    canonical = True

    def link(self, mu):
        return np.log(mu)

    def linkinv(self, eta):
        return np.exp(self.clamp(eta))

    def mu_eta(self, eta):
        return self.linkinv(eta)

    def mu_eta2(self, eta):
        return self.linkinv(eta)

    def variance(self, mu):
        return np.asarray(mu, dtype=float)

    def variance_deriv(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def quasi(self, mu, y):
        # y log(mu) - mu - (y log y - y), with 0 log 0 = 0
        return xlogy(y, mu) - mu - xlogy(y, y) + y

    def q1(self, eta, y):
        return y - self.linkinv(eta)

    def q2(self, eta, y):
        return -self.linkinv(eta) * np.ones(np.shape(y))

    def validate_response(self, y):
        if np.any(np.asarray(y) < 0):
            raise DataValidationError("poisson responses must be nonnegative")

    def sample(self, mu, rng, scale=1.0):
        return rng.poisson(mu).astype(float)


class Bernoulli(QuasiFamily):
    name = "bernoulli"
    eta_bound = 30.0
    canonical = True

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.log(mu) - np.log1p(-mu)

    def linkinv(self, eta):
        return expit(self.clamp(eta))

    def mu_eta(self, eta):
        mu = self.linkinv(eta)
        return mu * (1.0 - mu)

    def mu_eta2(self, eta):
        mu = self.linkinv(eta)
        return mu * (1.0 - mu) * (1.0 - 2.0 * mu)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * (1.0 - mu)

    def variance_deriv(self, mu):
        return 1.0 - 2.0 * np.asarray(mu, dtype=float)

    def quasi(self, mu, y):
        return (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)
                - xlogy(y, y) - xlogy(1.0 - y, 1.0 - y))

    def q1(self, eta, y):
        return y - self.linkinv(eta)

    def q2(self, eta, y):
        return -self.mu_eta(eta) * np.ones(np.shape(y))

    def validate_response(self, y):
        y = np.asarray(y)
        if np.any((y < 0) | (y > 1)):
            raise DataValidationError("bernoulli responses must lie in [0, 1]")

    def sample(self, mu, rng, scale=1.0):
        return (rng.random(np.shape(mu)) < mu).astype(float)


FAMILIES = {"gaussian": Gaussian, "poisson": Poisson, "bernoulli": Bernoulli}
# common aliases
FAMILIES["binomial"] = Bernoulli
FAMILIES["logistic"] = Bernoulli
FAMILIES["normal"] = Gaussian


def get_family(family) -> QuasiFamily:
    """Resolve a family name or pass an instance through."""
    if isinstance(family, QuasiFamily):
        return family
    try:
        return FAMILIES[str(family).lower()]()
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; expected one of {sorted(set(FAMILIES))}"
        ) from None


def _checked_sum(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError(
            f"{what} is not finite: a fitted mean sits on the boundary of the "
            "mean range (separation or divergence)"
        )
    return float(values.sum())


def quasi_loglik(family, eta, y) -> float:
    """Sum of normalized quasi-likelihoods ``sum_i Q(g^{-1}(eta_i), y_i)``."""
    family = get_family(family)
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    if eta.shape != y.shape:
        raise ValueError("eta and y must have the same shape")
    return _checked_sum(family.quasi(family.linkinv(eta), y), "quasi-likelihood")


def deviance(family, y, mu) -> float:
    """Deviance ``sum_i -2 Q(mu_i, y_i)``; zero iff ``mu == y``."""
    family = get_family(family)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != y.shape:
        raise ValueError("y and mu must have the same shape")
    with np.errstate(divide="ignore", invalid="ignore"):
        q = family.quasi(mu, y)
    return _checked_sum(-2.0 * q, "deviance")
