"""Regularizers on the simplex: gradients, constrained conjugates, Bregman divergences.

Two mirror maps are supported:

* negative entropy   Psi(x) = sum_i x_i log x_i,      grad_i = 1 + log x_i
* 1/2-Tsallis        Psi(x) = -2 sum_i sqrt(x_i),     grad_i = -1/sqrt(x_i)

The simplex-constrained conjugate map for negative entropy is the softmax
(computed with a max shift); for Tsallis it has no closed form and is found
by bisection over the normalization multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

NEG_ENTROPY = "negative-entropy"
TSALLIS_HALF = "tsallis-half"

#: coordinates below this are treated as domain violations for grad_psi
_INTERIOR_TOL = 1e-300


@dataclass(frozen=True)
class Regularizer:
    kind: str
    arms: int
    delta: float

    def __post_init__(self):
        if self.kind not in (NEG_ENTROPY, TSALLIS_HALF):
            raise ConfigError(f"unknown regularizer kind {self.kind!r}")
        if self.arms < 1:
            raise ConfigError("arms must be positive")
        if not (0.0 < self.delta <= 1.0 / self.arms):
            raise ConfigError("delta must lie in (0, 1/arms]")

    def constants(self) -> tuple[float, float]:
        """Regularity constants (C1, C2): diameter bound and stability scale."""
        if self.kind == NEG_ENTROPY:
            return float(np.log(self.arms)), 1.0 / self.delta
        return 2.0 * (np.sqrt(self.arms) - 1.0), 2.0 / self.delta

    @property
    def x0(self) -> np.ndarray:
        """Uniform base point."""
        return np.full(self.arms, 1.0 / self.arms)


def _require_interior(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.min() < _INTERIOR_TOL:
        raise DomainError("point has a (numerically) zero coordinate")
    return x


def psi_value(reg: Regularizer, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if reg.kind == NEG_ENTROPY:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(x > 0.0, x * np.log(np.maximum(x, _INTERIOR_TOL)), 0.0)
        return float(np.sum(terms))
    return float(-2.0 * np.sum(np.sqrt(x)))


def grad_psi(reg: Regularizer, x: np.ndarray) -> np.ndarray:
    """Componentwise gradient of the regularizer; requires an interior point."""
    x = _require_interior(x)
    if reg.kind == NEG_ENTROPY:
        return 1.0 + np.log(x)
    return -1.0 / np.sqrt(x)


def grad_psi_star_with_dual(reg: Regularizer, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Simplex-constrained conjugate map, plus the gradient at the output.

    Returns (x, g) with x = argmax_{simplex} <theta, .> - Psi and g = grad Psi(x)
    up to an additive constant. Computing g directly in the dual domain avoids
    evaluating log/1/sqrt on coordinates that underflowed to zero in x.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("dual vector must be finite")
    if reg.kind == NEG_ENTROPY:
        shifted = theta - theta.max()
        w = np.exp(shifted)
        z = w.sum()
        x = w / z
        dual = 1.0 + shifted - np.log(z)
        return x, dual

    # Tsallis: x_i = 1/(lam - theta_i)^2 with lam > max theta the root of
    # f(lam) = sum_i 1/(lam - theta_i)^2 = 1. f is strictly decreasing;
    # f(max+1) >= 1 (the max coordinate alone contributes 1) and
    # f(max+sqrt(A)) <= A/A = 1, so [max+1, max+sqrt(A)] brackets the root.
    tmax = theta.max()
    lo, hi = tmax + 1.0, tmax + np.sqrt(reg.arms)

    def f(lam: float) -> float:
        return float(np.sum(1.0 / (lam - theta) ** 2))

    lam = hi
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        val = f(lam)
        if abs(val - 1.0) <= 1e-13:
            break
        if val > 1.0:
            lo = lam
        else:
            hi = lam
    if abs(f(lam) - 1.0) > 1e-12:
        raise NumericalError("tsallis conjugate bisection did not converge")
    x = 1.0 / (lam - theta) ** 2
    x /= x.sum()  # remove the residual normalization error
    dual = theta - lam
    return x, dual


def grad_psi_star_constrained(reg: Regularizer, theta: np.ndarray) -> np.ndarray:
    """Simplex-constrained conjugate map (see grad_psi_star_with_dual)."""
    return grad_psi_star_with_dual(reg, theta)[0]


def bregman(reg: Regularizer, x: np.ndarray, y: np.ndarray) -> float:
    """D_Psi(x, y) = Psi(x) - Psi(y) - <grad Psi(y), x - y>; y must be interior."""
    x = np.asarray(x, dtype=float)
    gy = grad_psi(reg, y)  # raises DomainError on boundary y
    val = psi_value(reg, x) - psi_value(reg, y) - float(np.dot(gy, x - np.asarray(y, dtype=float)))
    return max(val, 0.0)
