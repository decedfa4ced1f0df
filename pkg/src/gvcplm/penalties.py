"""Penalty functions ``p_lambda(|beta|)`` and their local quadratic weights.

All functions are vectorized over ``beta``; ``lam`` may be a scalar or a
per-coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BelowThresholdError, UnsupportedPenaltyError

KINDS = ("scad", "l1", "lq", "l0", "none")


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "scad"
    lam: object = 0.0
    a: float = 3.7
    q: float = 0.5
    zero_threshold: float = 1e-8

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("lambda must be finite and nonnegative")
        if kind == "scad" and not self.a > 2:
            raise ValueError("SCAD shape a must exceed 2")
        if kind == "lq" and not 0 < self.q < 1:
            raise ValueError("Lq exponent q must lie in (0, 1)")
        if not self.zero_threshold > 0:
            raise ValueError("zero_threshold must be positive")

    def with_lambda(self, lam) -> "PenaltySpec":
        return replace(self, lam=lam)

    @property
    def lam_array(self):
        return np.asarray(self.lam, dtype=float)


def _lam(p, lam):
    return p.lam_array if lam is None else np.asarray(lam, dtype=float)


def penalty_value(p: PenaltySpec, beta, lam=None):
    """``p_lambda(beta)`` for ``beta >= 0``."""
    beta = np.abs(np.asarray(beta, dtype=float))
    lam = _lam(p, lam)
    if p.kind == "none":
        return np.zeros(np.broadcast(beta, lam).shape)
    if p.kind == "l1":
        return lam * beta
    if p.kind == "lq":
        return lam * beta**p.q
    if p.kind == "l0":
        return 0.5 * lam**2 * (beta != 0)
    a = p.a
    lam, beta = np.broadcast_arrays(lam, beta)
    mid = -(beta**2 - 2 * a * lam * beta + lam**2) / (2 * (a - 1))
    flat = (a + 1) * lam**2 / 2
    return np.where(beta <= lam, lam * beta, np.where(beta <= a * lam, mid, flat))


def penalty_deriv(p: PenaltySpec, beta, lam=None):
    """``p'_lambda(beta)`` for ``beta > 0``.  Undefined for the L0 penalty."""
    beta = np.abs(np.asarray(beta, dtype=float))
    lam = _lam(p, lam)
    if p.kind == "l0":
        raise UnsupportedPenaltyError(
            "the L0 penalty has no usable derivative; use best-subset search")
    if p.kind == "none":
        return np.zeros(np.broadcast(beta, lam).shape)
    if p.kind == "l1":
        return lam * np.ones_like(beta)
    if p.kind == "lq":
        with np.errstate(divide="ignore"):
            return lam * p.q * beta ** (p.q - 1)
    a = p.a
    lam, beta = np.broadcast_arrays(lam, beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(lam > 0, np.maximum(a * lam - beta, 0.0) / (a - 1), 0.0)
    return np.where(beta <= lam, lam, tail)


def lqa_weight(p: PenaltySpec, beta0, lam=None):
    """``p'_lambda(|beta0|) / |beta0|``, the curvature of the local quadratic.

    Coefficients at or below ``p.zero_threshold`` have no weight: the caller
    has to set them to zero instead.
    """
    b = np.abs(np.asarray(beta0, dtype=float))
    if np.any(b <= p.zero_threshold):
        raise BelowThresholdError(
            f"|beta0| <= {p.zero_threshold:g}: set the coefficient to zero instead")
    return penalty_deriv(p, b, lam) / b


def lqa_value(p: PenaltySpec, beta, beta0, lam=None):
    """The quadratic approximation of ``p_lambda(|beta|)`` around ``beta0``."""
    beta = np.asarray(beta, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    w = lqa_weight(p, beta0, lam)
    return penalty_value(p, beta0, lam) + 0.5 * w * (beta**2 - beta0**2)

