"""Run orchestration: environments, learners, metrics, trace emission.

All learners in a comparison consume the same realized loss table and delay
sequence; per-learner action noise comes from independently named streams of
the master seed, so swapping learners never perturbs the environment.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .errors import ConfigError
from .mirror import NEG_ENTROPY, Regularizer
from .protocol import (DelaySequence, EnvironmentConfig, FeedbackEvent,
                       FeedbackQueue, LossTable, generate_block_losses,
                       sample_delays)
from .prudent import PrudentBanker, ThresholdFunctions, build_comparator
from .rng import RngSampler, stream

LEARNERS = ("prudent-banker", "banker-omd", "conservative-ucb", "safe-exp3ix",
            "play-comparator", "play-fixed-arm")

CSV_HEADER = "t,stage,phase,alpha,loss_B,loss_star,loss_c,arrived"

#: desk/paper experiment profiles (horizon, arms, blocks)
SCALES = {"desk": (20000, 10, 100), "paper": (50000, 100, 500)}


def pseudo_loss(p: np.ndarray, loss_row: np.ndarray) -> float:
    """Expected loss <p_t, l_t> of playing distribution p_t."""
    p = np.asarray(p, dtype=float)
    loss_row = np.asarray(loss_row, dtype=float)
    if p.shape != loss_row.shape:
        raise ConfigError(f"dimension mismatch {p.shape} vs {loss_row.shape}")
    return float(np.dot(p, loss_row))


def best_fixed_arm(table: LossTable) -> tuple[int, np.ndarray]:
    """Hindsight-optimal arm (ties to lowest index) and its cumulative loss curve."""
    sums = table.losses.sum(axis=0)
    istar = int(np.argmin(sums))
    return istar, np.cumsum(table.losses[:, istar])


@dataclass
class RunConfig:
    env: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    learner: str = "prudent-banker"
    regularizer: str = NEG_ENTROPY
    delta: float = 0.01
    alpha_safe: float = 0.1
    fixed_arm: int | None = None
    threshold_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        self.env.validate()
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}")
        if not (0.0 < self.delta <= 1.0 / self.env.arms):
            raise ConfigError("delta must lie in (0, 1/arms]")
        if self.threshold_scale <= 0.0:
            raise ConfigError("threshold_scale must be positive")


@dataclass
class RunTrace:
    config: RunConfig
    t: np.ndarray
    stage: np.ndarray
    phase: np.ndarray
    alpha: np.ndarray
    loss_B: np.ndarray
    loss_star: np.ndarray
    loss_c: np.ndarray
    arrived: np.ndarray
    summary: dict
    learner: object | None = None  # populated when run(..., keep_learner=True)

    def csv_string(self) -> str:
        lines = [CSV_HEADER]
        for i in range(len(self.t)):
            lines.append(
                f"{self.t[i]},{self.stage[i]},{self.phase[i]},"
                f"{float(self.alpha[i])!r},{float(self.loss_B[i])!r},"
                f"{float(self.loss_star[i])!r},{float(self.loss_c[i])!r},"
                f"{self.arrived[i]}"
            )
        return "\n".join(lines) + "\n"


def build_environment(env: EnvironmentConfig) -> tuple[LossTable, DelaySequence]:
    """Generate the shared oblivious environment from the named seed streams."""
    table = generate_block_losses(env, stream(env.seed, "losses"))
    delays = sample_delays(env, stream(env.seed, "delays"))
    return table, delays


def make_learner(config: RunConfig, table: LossTable, istar: int, r0: float):
    A, T = config.env.arms, config.env.horizon
    sampler = RngSampler(stream(config.seed, f"action:{config.learner}"))
    name = config.learner
    if name == "prudent-banker":
        reg = Regularizer(kind=config.regularizer, arms=A, delta=config.delta)
        xc = build_comparator(A, config.delta, istar)
        return PrudentBanker(reg, xc, T, sampler, threshold_scale=config.threshold_scale)
    if name == "banker-omd":
        reg = Regularizer(kind=config.regularizer, arms=A, delta=config.delta)
        return baselines.BankerOMDLearner(reg, sampler)
    if name == "conservative-ucb":
        return baselines.ConservativeUCB(A, istar, r0, alpha_safe=config.alpha_safe,
                                         horizon=T)
    if name == "safe-exp3ix":
        return baselines.SafeExp3IX(A, T, istar, r0, sampler,
                                    alpha_safe=config.alpha_safe)
    if name == "play-comparator":
        return baselines.PlayDistribution(build_comparator(A, config.delta, istar), sampler)
    if name == "play-fixed-arm":
        arm = istar if config.fixed_arm is None else config.fixed_arm
        dist = np.zeros(A)
        dist[arm] = 1.0
        return baselines.PlayDistribution(dist, sampler)
    raise ConfigError(name)


def run(config: RunConfig, table: LossTable | None = None,
        delays: DelaySequence | None = None, keep_learner: bool = False) -> RunTrace:
    """Execute one full run and collect the per-round trace.

    A pre-built (table, delays) pair can be passed in to share one realized
    environment across learners; by default it is generated from the seed.
    """
    config.validate()
    if table is None or delays is None:
        table, delays = build_environment(config.env)
    T, A = config.env.horizon, config.env.arms

    istar, star_curve = best_fixed_arm(table)
    # oracle-derived default reward: mean reward of the hindsight-best arm
    r0 = float(np.mean(1.0 - table.losses[:, istar]))
    xc = build_comparator(A, config.delta, istar)
    learner = make_learner(config, table, istar, r0)

    queue = FeedbackQueue(T)
    t_col = np.arange(1, T + 1, dtype=np.int64)
    stage_col = np.ones(T, dtype=np.int64)
    phase_col = np.ones(T, dtype=np.int64)
    alpha_col = np.ones(T)
    pl_col = np.zeros(T)
    arrived_col = np.zeros(T, dtype=np.int64)

    for t in range(1, T + 1):
        try:
            dist, arm = learner.act(t)
        except Exception as exc:
            raise type(exc)(f"round {t}: {exc}") from exc
        stage_col[t - 1] = getattr(learner, "stage", 1)
        phase_col[t - 1] = getattr(learner, "phase", 1)
        alpha_col[t - 1] = getattr(learner, "alpha", 1.0)
        pl_col[t - 1] = pseudo_loss(dist, table.row(t))
        queue.enqueue(FeedbackEvent(origin_round=t, arm=arm,
                                    loss_value=float(table.row(t)[arm]),
                                    arrival_round=t + delays.delay(t)))
        events = queue.step(t)
        arrived_col[t - 1] = len(events)
        learner.receive(events, t)

    loss_B = np.cumsum(pl_col)
    loss_c = np.cumsum(table.losses @ xc)
    restarts = getattr(learner, "restarts", [])
    n_hard = sum(1 for r in restarts if r.kind == "hard")
    n_soft = sum(1 for r in restarts if r.kind == "soft")
    summary = {
        "learner": config.learner,
        "seed": int(config.seed),
        "horizon": T,
        "arms": A,
        "delay_model": config.env.delay_model,
        "realized_D": delays.total,
        "best_fixed_arm": istar,
        "r0": r0,
        "r0_source": "oracle (hindsight best arm)",
        "comparator_anchor_source": "oracle (hindsight best arm)",
        "stages": n_hard + 1,
        "phases": n_soft + n_hard + 1,
        "final_alpha": float(alpha_col[-1]),
        "final_delay_estimate": int(getattr(learner, "delay_estimate", 0)),
        "regret_vs_best_fixed_arm": float(loss_B[-1] - star_curve[-1]),
        "comparator_gap": float(loss_B[-1] - loss_c[-1]),
        "threshold_scale": config.threshold_scale,
    }
    trace = RunTrace(config=config, t=t_col, stage=stage_col, phase=phase_col,
                     alpha=alpha_col, loss_B=loss_B, loss_star=star_curve,
                     loss_c=loss_c, arrived=arrived_col, summary=summary)
    if keep_learner:
        trace.learner = learner
    return trace


def emit(trace: RunTrace, out_base: str | Path, formats=("csv", "json-summary")) -> list[Path]:
    """Write the trace to <out_base>.csv and/or <out_base>.json."""
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out_base.with_suffix(".csv")
            try:
                path.write_text(trace.csv_string())
            except OSError as exc:
                raise OSError(f"writing {path}: {exc}") from exc
        elif fmt == "json-summary":
            path = out_base.with_suffix(".json")
            try:
                path.write_text(json.dumps(trace.summary, indent=2, sort_keys=True) + "\n")
            except OSError as exc:
                raise OSError(f"writing {path}: {exc}") from exc
        else:
            raise ConfigError(f"unknown emit format {fmt!r}")
        written.append(path)
    return written


def parse_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Re-read an emitted CSV into column arrays (exact round trip)."""
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise ConfigError(f"unexpected CSV header {lines[0]!r}")
    cols = {name: [] for name in CSV_HEADER.split(",")}
    for line in lines[1:]:
        for name, val in zip(cols, line.split(",")):
            cols[name].append(val)
    out = {}
    for name, vals in cols.items():
        if name in ("t", "stage", "phase", "arrived"):
            out[name] = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            out[name] = np.array([float(v) for v in vals])
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value config file; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().split("\n"):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out
