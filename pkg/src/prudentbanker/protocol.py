"""The delayed adversarial bandit game.

Loss tables are generated obliviously (before any learner acts) and never
mutated. Feedback for the action of round t becomes visible at the end of
round t + d_t and is first usable for the decision at round t + d_t + 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ProtocolError

DELAY_MODELS = ("none", "fixed-one-step", "geometric", "lomax", "explicit")


@dataclass(frozen=True)
class LossTable:
    """Full horizon-by-arms loss matrix with entries in [0, 1]."""

    horizon: int
    arms: int
    losses: np.ndarray

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float)
        if losses.shape != (self.horizon, self.arms):
            raise ConfigError(
                f"loss matrix shape {losses.shape} != ({self.horizon}, {self.arms})"
            )
        if losses.size and (losses.min() < 0.0 or losses.max() > 1.0):
            raise ConfigError("loss entries must lie in [0, 1]")
        object.__setattr__(self, "losses", losses)

    def row(self, t: int) -> np.ndarray:
        """Loss vector of 1-indexed round t."""
        return self.losses[t - 1]


@dataclass(frozen=True)
class DelaySequence:
    """Per-round nonnegative integer delays d_t."""

    delays: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays)
        if delays.size and not np.issubdtype(delays.dtype, np.integer):
            raise ConfigError("delays must be integers")
        delays = delays.astype(np.int64)
        if delays.size and delays.min() < 0:
            raise ConfigError("delays must be nonnegative")
        object.__setattr__(self, "delays", delays)

    def __len__(self) -> int:
        return len(self.delays)

    def delay(self, t: int) -> int:
        """Delay of 1-indexed round t."""
        return int(self.delays[t - 1])

    @property
    def total(self) -> int:
        """Total delay D, computed in exact integer arithmetic."""
        return int(np.sum(self.delays, dtype=object)) if len(self.delays) else 0


@dataclass(frozen=True)
class FeedbackEvent:
    """The pair (arm, loss) generated at origin_round, visible at arrival_round."""

    origin_round: int
    arm: int
    loss_value: float
    arrival_round: int

    def __post_init__(self):
        if self.arrival_round < self.origin_round:
            raise ProtocolError("feedback cannot arrive before it is generated")

    @property
    def delay(self) -> int:
        return self.arrival_round - self.origin_round


@dataclass
class EnvironmentConfig:
    horizon: int = 20000
    arms: int = 10
    loss_model: str = "block"  # "block" | "custom"
    blocks: int = 100
    delay_model: str = "none"
    p_active: float = 0.03
    q_geo: float = 0.4
    lomax_shape: float = 2.5
    lomax_scale: float = 1.0
    explicit_delays: np.ndarray | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.arms < 1:
            raise ConfigError("arms must be positive")
        if self.loss_model == "block":
            if self.blocks < 1 or self.blocks > self.horizon:
                raise ConfigError("need 1 <= blocks <= horizon")
        if self.delay_model not in DELAY_MODELS:
            raise ConfigError(f"unknown delay model {self.delay_model!r}")
        if not (0.0 <= self.p_active <= 1.0):
            raise ConfigError("p_active must lie in [0, 1]")
        if not (0.0 < self.q_geo <= 1.0):
            raise ConfigError("q_geo must lie in (0, 1]")
        if self.lomax_shape <= 0 or self.lomax_scale <= 0:
            raise ConfigError("lomax shape and scale must be positive")
        if self.delay_model == "explicit":
            if self.explicit_delays is None:
                raise ConfigError("explicit delay model needs a sequence")
            if len(self.explicit_delays) != self.horizon:
                raise ConfigError("explicit delay sequence length != horizon")


def block_index(t: int, horizon: int, blocks: int) -> int:
    """1-indexed block id of round t: 1 + min{floor((t-1)/(floor(T/B)+1)), B-1}."""
    width = horizon // blocks + 1
    return 1 + min((t - 1) // width, blocks - 1)


def generate_block_losses(config: EnvironmentConfig, rng: np.random.Generator) -> LossTable:
    """Block-nonstationary losses: per (arm, block) truncated-normal draws.

    Each arm/block pair gets a mean ~ Unif(0,1) and a stddev ~ Unif(0.1,0.2);
    per-round losses are normal draws truncated to [0, 1] (rejection sampling
    with at most 100 attempts, then clamping the stragglers).
    """
    config.validate()
    T, A, B = config.horizon, config.arms, config.blocks
    means = rng.uniform(0.0, 1.0, size=(A, B))
    sds = rng.uniform(0.1, 0.2, size=(A, B))
    blocks0 = np.array([block_index(t, T, B) - 1 for t in range(1, T + 1)])
    M = means[:, blocks0].T  # (T, A)
    S = sds[:, blocks0].T

    samples = rng.normal(M, S)
    bad = (samples < 0.0) | (samples > 1.0)
    for _ in range(100):
        if not bad.any():
            break
        redraw = rng.normal(M[bad], S[bad])
        samples[bad] = redraw
        bad[bad] = (redraw < 0.0) | (redraw > 1.0)
    if bad.any():
        samples = np.clip(samples, 0.0, 1.0)
    return LossTable(horizon=T, arms=A, losses=samples)


def sample_delays(config: EnvironmentConfig, rng: np.random.Generator) -> DelaySequence:
    """Draw a delay sequence from the configured model."""
    config.validate()
    T = config.horizon
    model = config.delay_model
    if model == "none":
        d = np.zeros(T, dtype=np.int64)
    elif model == "fixed-one-step":
        d = (rng.random(T) < config.p_active).astype(np.int64)
    elif model == "geometric":
        active = rng.random(T) < config.p_active
        d = np.zeros(T, dtype=np.int64)
        # Geom(q) on {1, 2, ...}
        d[active] = rng.geometric(config.q_geo, size=int(active.sum()))
    elif model == "lomax":
        active = rng.random(T) < config.p_active
        d = np.zeros(T, dtype=np.int64)
        u = rng.random(int(active.sum()))
        # inverse CDF of Lomax(shape, scale): z = scale * ((1-u)^(-1/shape) - 1)
        z = config.lomax_scale * ((1.0 - u) ** (-1.0 / config.lomax_shape) - 1.0)
        d[active] = 1 + np.floor(z).astype(np.int64)
    elif model == "explicit":
        d = np.asarray(config.explicit_delays, dtype=np.int64)
    else:  # pragma: no cover - guarded by validate
        raise ConfigError(model)
    return DelaySequence(delays=d)


class FeedbackQueue:
    """Delivers feedback events at their arrival rounds, exactly once each.

    Events whose arrival round lies beyond the horizon are discarded at
    enqueue time (the game ends at T; late feedback is never observed).
    Within a round, events are delivered in origin-round order.
    """

    def __init__(self, horizon: int):
        self.horizon = horizon
        self._pending: dict[int, list[FeedbackEvent]] = {}
        self._cursor = 0  # last round already stepped

    def enqueue(self, event: FeedbackEvent) -> None:
        if event.arrival_round <= self._cursor:
            raise ProtocolError(
                f"event for round {event.origin_round} arrives at already-queried "
                f"round {event.arrival_round}"
            )
        if event.arrival_round > self.horizon:
            return
        self._pending.setdefault(event.arrival_round, []).append(event)

    def step(self, t: int) -> list[FeedbackEvent]:
        """Return the events arriving at the end of round t (in origin order)."""
        if t != self._cursor + 1:
            raise ProtocolError(f"queue stepped out of order: expected {self._cursor + 1}, got {t}")
        self._cursor = t
        events = self._pending.pop(t, [])
        events.sort(key=lambda e: e.origin_round)
        return events


def outstanding_counters(delays: DelaySequence, phase_start: int, t: int) -> tuple[int, int]:
    """Outstanding-feedback count and its running sum over a phase window.

    The first component counts rounds tau in [phase_start, t-1] whose feedback
    is still missing at the start of round t (tau + d_tau >= t). The second is
    the running sum of those counts for r = phase_start..t.
    """
    if phase_start > t:
        raise ConfigError("phase_start must be <= t")
    d = delays.delays
    running = 0
    latest = 0
    for r in range(phase_start, t + 1):
        taus = np.arange(phase_start, r)
        latest = int(np.sum(taus + d[taus - 1] >= r)) if len(taus) else 0
        running += latest
    return latest, running
