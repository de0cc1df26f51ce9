"""Banker-OMD: delayed online mirror descent with step-size credits.

Every round t is granted a credit v_t = sigma_t that it can donate to later
rounds once its own feedback has arrived. A round's prediction is a dual-space
convex combination of the post-update points z_u of the donors it drained,
topped up by a "borrow" b_t from the uniform base point when arrived credits
run short.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError
from .mirror import Regularizer, bregman, grad_psi, grad_psi_star_with_dual
from .protocol import FeedbackEvent

MISSING = "missing"
ARRIVED = "arrived"

_GRAD_FLOOR = 1e-300  # defensive floor before evaluating grad_psi on played points


class Kahan:
    """Compensated running sum (float accumulators over long horizons)."""

    __slots__ = ("total", "_c")

    def __init__(self, value: float = 0.0):
        self.total = value
        self._c = 0.0

    def add(self, x: float) -> None:
        y = x - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t


@dataclass
class RoundRecord:
    u: int
    sigma: float
    v: float
    x: np.ndarray  # played distribution
    arm: int
    status: str = MISSING
    est_weight: float | None = None  # importance-weighted loss at the played arm
    z: np.ndarray | None = None
    dual_z: np.ndarray | None = None
    donated: float = 0.0


def step_size(reg: Regularizer, t: int, phase_start: int, d_t: int, DD_t: int) -> float:
    """Delay-adaptive step size for round t of a phase starting at phase_start.

    sigma_t = sqrt(C2/C1) / ( 1/sqrt(t~) + d_t * sqrt(ln(DD_t+1)/DD_t) )

    with t~ the within-phase round index; the delay term is zero when no
    feedback is outstanding.
    """
    if t < phase_start:
        raise ProtocolError("t must be >= phase_start")
    c1, c2 = reg.constants()
    tt = t - phase_start + 1
    denom = 1.0 / math.sqrt(tt)
    if d_t > 0 and DD_t > 0:
        denom += d_t * math.sqrt(math.log(DD_t + 1.0) / DD_t)
    return math.sqrt(c2 / c1) / denom


class BankerOMD:
    """One phase-scoped Banker-OMD learner over a ledger of round records.

    The ledger covers only rounds >= phase_start; `reset` starts a fresh phase
    (feedback for earlier rounds is dropped on arrival).
    """

    def __init__(self, reg: Regularizer):
        self.reg = reg
        self._dual_x0 = grad_psi(reg, reg.x0)
        # run-lifetime diagnostics (survive phase resets)
        self.max_conservation_residual = 0.0
        self.min_credit_seen = 0.0
        self.last_borrow: tuple[int, float, float, float] | None = None
        self.reset(1)

    def reset(self, phase_start: int) -> None:
        self.phase_start = phase_start
        self.records: dict[int, RoundRecord] = {}
        self._credit_heap: list[int] = []
        self.missing: set[int] = set()
        self._missing_sigma = Kahan()
        self.outstanding_sum = 0  # running sum of per-round outstanding counts
        self.borrow_total = Kahan()
        self._pending: tuple[int, float] | None = None

    # -- per-round flow -----------------------------------------------------

    def begin_round(self, t: int) -> np.ndarray:
        """Compute sigma_t, drain credits, and return the prediction x-hat_t."""
        d_t = len(self.missing)
        self.outstanding_sum += d_t
        sigma = step_size(self.reg, t, self.phase_start, d_t, self.outstanding_sum)

        allocation, b = self._allocate(t, sigma)
        theta = (b / sigma) * self._dual_x0
        for u, amount in allocation:
            theta = theta + (amount / sigma) * self.records[u].dual_z
        xhat, _ = grad_psi_star_with_dual(self.reg, theta)

        self._pending = (t, sigma)
        return xhat

    def commit(self, t: int, played: np.ndarray, arm: int) -> None:
        """Record the distribution actually played at round t (post-mixture)."""
        if self._pending is None or self._pending[0] != t:
            raise ProtocolError("commit without a matching begin_round")
        _, sigma = self._pending
        self._pending = None
        self.records[t] = RoundRecord(u=t, sigma=sigma, v=sigma, x=np.asarray(played, float), arm=arm)
        self.missing.add(t)
        self._missing_sigma.add(sigma)

    def ingest(self, event: FeedbackEvent) -> float | None:
        """Apply arrived feedback; returns the importance weight, or None if dropped.

        Feedback for rounds before the current phase start (orphaned by a
        restart) is discarded without effect.
        """
        u = event.origin_round
        if u < self.phase_start:
            return None
        rec = self.records.get(u)
        if rec is None:
            return None
        if rec.status == ARRIVED:
            raise ProtocolError(f"duplicate feedback for round {u}")
        if rec.arm != event.arm:
            raise ProtocolError(f"feedback arm mismatch at round {u}")
        x_at_arm = float(rec.x[event.arm])
        if x_at_arm <= 0.0:
            raise ProtocolError(f"played probability 0 at round {u}, arm {event.arm}")
        w = event.loss_value / x_at_arm
        theta = grad_psi(self.reg, np.maximum(rec.x, _GRAD_FLOOR)).copy()
        theta[event.arm] -= w / rec.sigma
        rec.z, rec.dual_z = grad_psi_star_with_dual(self.reg, theta)
        rec.est_weight = w
        rec.status = ARRIVED
        self.missing.discard(u)
        self._missing_sigma.add(-rec.sigma)
        if rec.v > 0.0:
            heapq.heappush(self._credit_heap, u)
        return w

    # -- internals ----------------------------------------------------------

    def _allocate(self, t: int, sigma: float) -> tuple[list[tuple[int, float]], float]:
        """Greedily drain arrived credits in increasing round order."""
        b = sigma
        allocation: list[tuple[int, float]] = []
        while b > 0.0 and self._credit_heap:
            u = heapq.heappop(self._credit_heap)
            rec = self.records.get(u)
            if rec is None or rec.status != ARRIVED or rec.v <= 0.0:
                continue  # stale heap entry
            amount = min(rec.v, b)
            rec.v -= amount
            rec.donated += amount
            b -= amount
            allocation.append((u, amount))
            self.min_credit_seen = min(self.min_credit_seen, rec.v)
            if rec.v > 0.0:
                heapq.heappush(self._credit_heap, u)
                break  # b is exhausted
        b = max(b, 0.0)
        if b > 0.0:
            self.borrow_total.add(b)
            # snapshot for the borrow characterization check:
            # B_t should equal sigma_t + sum of sigma_u over currently missing u
            self.last_borrow = (t, self.borrow_total.total, sigma, self._missing_sigma.total)
        residual = abs(math.fsum(a for _, a in allocation) + b - sigma)
        self.max_conservation_residual = max(self.max_conservation_residual, residual)
        return allocation, b


def expected_mirror_step_divergence(reg: Regularizer, x: np.ndarray, sigma: float,
                                    loss: float = 1.0) -> float:
    """E_a~x [ sigma * D_Psi(x, z(a)) ] for a unit-scale importance-weighted step.

    z(a) is the constrained mirror step from x with estimator (loss/x_a) e_a and
    step size 1/sigma. The expectation is computed exactly over the finite arm set.
    """
    x = np.asarray(x, dtype=float)
    base = grad_psi(reg, x)
    total = 0.0
    for a in range(reg.arms):
        if x[a] <= 0.0:
            continue
        theta = base.copy()
        theta[a] -= (loss / x[a]) / sigma
        z, _ = grad_psi_star_with_dual(reg, theta)
        total += x[a] * sigma * bregman(reg, x, np.maximum(z, 1e-300))
    return total
