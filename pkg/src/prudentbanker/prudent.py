"""Prudent-Banker: safe phased-aggression wrapper around Banker-OMD.

Three control layers sit on top of the base learner:

* delay stages — a doubling estimate D-hat of the total delay; when the
  realized (arrived) delay of the current stage exceeds it, a *hard restart*
  doubles the estimate up to a power of two and resets everything;
* aggression phases — the played point is alpha * x-hat + (1 - alpha) * x^c;
  alpha doubles (a *soft restart*) only when the arrived-feedback gap
  statistic certifies that the safe comparator x^c is suboptimal;
* the safe mixture itself, which keeps every played probability at least
  (1 - alpha) * delta and thereby bounds importance weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .banker import BankerOMD, Kahan
from .errors import ConfigError
from .mirror import Regularizer
from .protocol import FeedbackEvent


@dataclass(frozen=True)
class ThresholdFunctions:
    """Restart thresholds R-hat, xi-hat and their sum B as functions of D.

    `scale` multiplies both components; 1.0 is the analysis value. The
    theoretical constants are very conservative, so qualitative experiment
    reproductions run with a smaller calibration (see harness).
    """

    horizon: int
    c1: float
    c2: float
    delta: float
    scale: float = 1.0

    @classmethod
    def for_regularizer(cls, reg: Regularizer, horizon: int, scale: float = 1.0) -> "ThresholdFunctions":
        c1, c2 = reg.constants()
        return cls(horizon=horizon, c1=c1, c2=c2, delta=reg.delta, scale=scale)

    def rhat(self, D: int | float) -> float:
        """R-hat(D) = sqrt(C1 C2) * (3 sqrt(T) + 7 sqrt(2 D ln(D+1)))."""
        if D < 0:
            raise ConfigError("D must be nonnegative")
        term = 0.0
        if D > 0:
            term = 7.0 * math.sqrt(2.0 * D * math.log(D + 1.0))
        return self.scale * math.sqrt(self.c1 * self.c2) * (3.0 * math.sqrt(self.horizon) + term)

    def xi(self, D: int | float) -> float:
        """xi-hat(D) = (sqrt(8D + 1) - 1) / delta."""
        if D < 0:
            raise ConfigError("D must be nonnegative")
        return self.scale * (math.sqrt(8.0 * D + 1.0) - 1.0) / self.delta

    def restart_threshold(self, D: int | float) -> float:
        """B(D) = 2 R-hat(D) + xi-hat(D)."""
        return 2.0 * self.rhat(D) + self.xi(D)


def gap_statistic(g: np.ndarray, xc: np.ndarray) -> float:
    """max over the simplex of <g, x^c - x> = <g, x^c> - min_a g(a).

    The maximum is attained at a vertex; ties go to the lowest arm index
    (irrelevant for the value, fixed for determinism of the argmin).
    """
    g = np.asarray(g, dtype=float)
    return float(np.dot(g, xc) - g.min())


def build_comparator(arms: int, delta: float, anchor: int) -> np.ndarray:
    """Full-support comparator: 1-(A-1)delta on the anchor arm, delta elsewhere."""
    if not (0.0 < delta <= 1.0 / arms):
        raise ConfigError("delta must lie in (0, 1/arms]")
    if not (0 <= anchor < arms):
        raise ConfigError("anchor arm out of range")
    xc = np.full(arms, delta)
    xc[anchor] = 1.0 - (arms - 1) * delta
    return xc


def next_delay_estimate(trigger: int) -> int:
    """Doubling rule 2^ceil(log2(trigger)) computed exactly in integers."""
    if trigger < 1:
        raise ConfigError("trigger must be >= 1")
    return 1 << (trigger - 1).bit_length()


@dataclass
class RestartRecord:
    round: int
    kind: str  # "hard" | "soft"
    trigger: float  # stage delay (hard) or gap value (soft)
    old_estimate: int
    new_estimate: int
    new_phase: int
    new_alpha: float


class PrudentBanker:
    """The full learner; exposes the standard act/receive interface."""

    def __init__(self, reg: Regularizer, comparator: np.ndarray, horizon: int,
                 sampler, threshold_scale: float = 1.0):
        comparator = np.asarray(comparator, dtype=float)
        if comparator.shape != (reg.arms,):
            raise ConfigError("comparator dimension mismatch")
        if comparator.min() < reg.delta - 1e-12:
            raise ConfigError("comparator must have every coordinate >= delta")
        self.reg = reg
        self.xc = comparator
        self.horizon = horizon
        self.sampler = sampler
        self.tf = ThresholdFunctions.for_regularizer(reg, horizon, scale=threshold_scale)

        self.base = BankerOMD(reg)
        self.stage = 1
        self.delay_estimate = 1
        self.stage_start = 1
        self.stage_delay = 0  # realized delay of arrived feedback, current stage
        self.phase = 1
        self.phase_start = 1
        self.alpha = min(1.0 / self.tf.rhat(self.delay_estimate), 1.0)

        self._g = np.zeros(reg.arms)
        self._g_comp = np.zeros(reg.arms)  # Kahan compensation for g
        self.restarts: list[RestartRecord] = []

    # -- gap accumulator (compensated) --------------------------------------

    def _g_add(self, arm: int, w: float) -> None:
        y = w - self._g_comp[arm]
        t = self._g[arm] + y
        self._g_comp[arm] = (t - self._g[arm]) - y
        self._g[arm] = t

    @property
    def gap(self) -> float:
        return gap_statistic(self._g, self.xc)

    # -- round loop ---------------------------------------------------------

    def act(self, t: int) -> tuple[np.ndarray, int]:
        restarted = self._check_hard_restart(t)
        if restarted:
            # The restart round still plays the mixture, anchored at the reset
            # base point; it is not part of the new stage's ledger.
            xhat = self.reg.x0
            commit = False
        else:
            xhat = self.base.begin_round(t)
            commit = True
        x = self.alpha * xhat + (1.0 - self.alpha) * self.xc
        arm = self.sampler.draw(t, x)
        if commit:
            self.base.commit(t, x, arm)
        return x, arm

    def receive(self, events: list[FeedbackEvent], t: int) -> None:
        for ev in events:
            if ev.origin_round >= self.stage_start:
                self.stage_delay += ev.delay
            w = self.base.ingest(ev)
            if w is not None:
                self._g_add(ev.arm, w)
        self._check_soft_restart(t)

    # -- restarts -----------------------------------------------------------

    def _check_hard_restart(self, t: int) -> bool:
        if self.stage_delay <= self.delay_estimate:
            return False
        trigger = self.stage_delay
        new_estimate = next_delay_estimate(trigger)
        self.restarts.append(RestartRecord(
            round=t, kind="hard", trigger=float(trigger),
            old_estimate=self.delay_estimate, new_estimate=new_estimate,
            new_phase=1, new_alpha=min(1.0 / self.tf.rhat(new_estimate), 1.0)))
        self.stage += 1
        self.delay_estimate = new_estimate
        self.stage_start = t + 1
        self.stage_delay = 0
        self.phase = 1
        self.phase_start = t + 1
        self.alpha = min(1.0 / self.tf.rhat(new_estimate), 1.0)
        self.base.reset(t + 1)
        self._g[:] = 0.0
        self._g_comp[:] = 0.0
        return True

    def _check_soft_restart(self, t: int) -> None:
        if self.alpha >= 1.0:
            return
        threshold = self.tf.restart_threshold(self.delay_estimate)
        if self.gap <= threshold:
            return
        self.phase += 1
        self.alpha = min(2.0 ** (self.phase - 1) / self.tf.rhat(self.delay_estimate), 1.0)
        self.phase_start = t + 1
        self.restarts.append(RestartRecord(
            round=t, kind="soft", trigger=self.gap,
            old_estimate=self.delay_estimate, new_estimate=self.delay_estimate,
            new_phase=self.phase, new_alpha=self.alpha))
        self.base.reset(t + 1)
        self._g[:] = 0.0
        self._g_comp[:] = 0.0
