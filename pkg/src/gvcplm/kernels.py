"""Smoothing kernels and the constants derived from them."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .errors import NumericalError


def _epanechnikov(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, 0.75 * (1.0 - t * t), 0.0)


def _biweight(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, 0.9375 * (1.0 - t * t) ** 2, 0.0)


def _triweight(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, 1.09375 * (1.0 - t * t) ** 3, 0.0)


def _triangular(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, 1.0 - np.abs(t), 0.0)


def _uniform(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, 0.5, 0.0)


# name -> (function, K(0), int K^2, int t^2 K)
_BUILTIN = {
    "epanechnikov": (_epanechnikov, 0.75, 0.6, 0.2),
    "biweight": (_biweight, 0.9375, 5.0 / 7.0, 1.0 / 7.0),
    "triweight": (_triweight, 1.09375, 350.0 / 429.0, 1.0 / 9.0),
    "triangular": (_triangular, 1.0, 2.0 / 3.0, 1.0 / 6.0),
    "uniform": (_uniform, 0.5, 0.5, 1.0 / 3.0),
}
_BUILTIN["quartic"] = _BUILTIN["biweight"]
KERNELS = tuple(_BUILTIN)


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric kernel on ``[-support, support]`` with bandwidth ``h``.

    Use :func:`make_kernel` for the built-ins; pass ``func`` directly for a
    user kernel (its constants are then computed by quadrature).
    """

    name: str
    func: Callable = None
    h: float = 1.0
    support: float = 1.0

    def __post_init__(self):
        if self.func is None:
            try:
                object.__setattr__(self, "func", _BUILTIN[self.name][0])
            except KeyError:
                raise ValueError(f"unknown kernel {self.name!r}") from None
        if not self.h > 0:
            raise ValueError("bandwidth h must be positive")
        if not self.support > 0:
            raise ValueError("kernel support must be positive")

    @property
    def builtin(self) -> bool:
        return self.name in _BUILTIN and self.func is _BUILTIN[self.name][0]

    def __call__(self, t):
        return self.func(t)

    def scaled(self, t):
        """``K_h(t) = K(t / h) / h``."""
        return self.func(np.asarray(t, dtype=float) / self.h) / self.h

    def with_bandwidth(self, h) -> "KernelSpec":
        return replace(self, h=float(h))


def make_kernel(name="epanechnikov", h=1.0) -> KernelSpec:
    return KernelSpec(name=str(name).lower(), h=float(h))


class KernelConstants(NamedTuple):
    k0: float
    nu0: float
    mu2: float
    r_K: float
    mass: float = 1.0


def _r_k(k0, nu0, mass):
    # int K*K = (int K)^2 by Fubini
    return (k0 - 0.5 * nu0) / (mass - 0.5 * mass**2)


def kernel_constants(kernel: KernelSpec, method: str = "auto") -> KernelConstants:
    """Return ``K(0)``, ``int K^2``, ``int t^2 K`` and the GLRT constant ``r_K``.

    Built-in kernels use closed forms unless ``method="quadrature"``; user
    kernels always go through adaptive quadrature (absolute tolerance 1e-10).
    """
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError("method must be 'auto', 'closed' or 'quadrature'")
    if method != "quadrature" and kernel.builtin:
        _, k0, nu0, mu2 = _BUILTIN[kernel.name]
        return KernelConstants(k0, nu0, mu2, _r_k(k0, nu0, 1.0), 1.0)
    if method == "closed":
        raise ValueError(f"no closed form for kernel {kernel.name!r}")

    s = kernel.support
    f = kernel.func

    def quad(g):
        val, err = integrate.quad(g, -s, s, epsabs=1e-10, epsrel=1e-12, limit=200,
                                  points=[0.0])
        if not np.isfinite(val) or err > 1e-8:
            raise NumericalError(f"kernel quadrature did not converge (err={err:g})")
        return val

    mass = quad(lambda t: float(f(t)))
    nu0 = quad(lambda t: float(f(t)) ** 2)
    mu2 = quad(lambda t: t * t * float(f(t)))
    k0 = float(f(0.0))
    return KernelConstants(k0, nu0, mu2, _r_k(k0, nu0, mass), mass)
