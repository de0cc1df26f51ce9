"""Lower-bound machinery: greedy buckets, hard instances, delayed-to-batched simulation.

A delay sequence (positive, non-increasing, admissible) partitions the horizon
into greedy buckets such that no feedback generated inside a bucket arrives
before the bucket ends; a delayed game on such a sequence can therefore be
simulated exactly inside a batched game. The batched hard instances make one
designated arm Bernoulli with a per-block bias while all other arms are
deterministic 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, SimulationIntegrityError
from .protocol import DelaySequence, FeedbackEvent, FeedbackQueue, LossTable

#: index of the biased ("special") arm in hard instances
SPECIAL_ARM = 1


@dataclass(frozen=True)
class BucketDecomposition:
    """Greedy bucket boundaries b_1 < ... < b_{M+1}; bucket m is [b_m, b_{m+1})."""

    boundaries: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.boundaries) - 1

    @property
    def lengths(self) -> tuple[int, ...]:
        b = self.boundaries
        return tuple(b[m + 1] - b[m] for m in range(self.count))

    def bucket(self, m: int) -> range:
        """Rounds of 1-indexed bucket m."""
        return range(self.boundaries[m - 1], self.boundaries[m])

    def bucket_of(self, t: int) -> int:
        for m in range(1, self.count + 1):
            if t < self.boundaries[m]:
                return m
        raise PreconditionError(f"round {t} beyond the horizon")

    def suffix_mass(self, j: int) -> int:
        """V_j = sum of L_m^2 over buckets m >= j (exact integers)."""
        return sum(L * L for L in self.lengths[j - 1:])


def greedy_buckets(delays: DelaySequence) -> BucketDecomposition:
    """Greedy bucket decomposition: b_1 = 1, b_{m+1} = min_{t >= b_m} (t + d_t).

    Requires d_t >= 1, non-increasing delays, and d_t <= T + 1 - t (every
    feedback arrives within the horizon plus one).
    """
    d = delays.delays
    T = len(d)
    if T == 0:
        raise PreconditionError("empty delay sequence")
    if d.min() < 1:
        raise PreconditionError("greedy buckets require d_t >= 1")
    if np.any(np.diff(d) > 0):
        raise PreconditionError("greedy buckets require non-increasing delays")
    caps = T + 1 - np.arange(1, T + 1)
    if np.any(d > caps):
        raise PreconditionError("greedy buckets require d_t <= T + 1 - t")

    arrivals = np.arange(1, T + 1) + d  # t + d_t
    # suffix minima: min_{t >= s} (t + d_t)
    suffix_min = np.minimum.accumulate(arrivals[::-1])[::-1]
    boundaries = [1]
    while boundaries[-1] <= T:
        boundaries.append(int(suffix_min[boundaries[-1] - 1]))
    return BucketDecomposition(boundaries=tuple(boundaries))


def corollary_delays(q: int, N: int) -> DelaySequence:
    """The structured sequence d_t = min{q, T + 1 - t} with T = (N + 1) q.

    Its total delay is N q^2 + q (q + 1) / 2 and all greedy buckets have
    length q.
    """
    if q < 1 or N < 1:
        raise PreconditionError("need q >= 1 and N >= 1")
    T = (N + 1) * q
    t = np.arange(1, T + 1)
    return DelaySequence(delays=np.minimum(q, T + 1 - t).astype(np.int64))


@dataclass(frozen=True)
class HardInstancePair:
    """The pair of batched environments E+ / E- differing only in arm 2's mean.

    In block m the special arm's loss is Bernoulli(1/2 + sign * eps_m); all
    other arms lose a deterministic 1/2. The comparator is anchored on arm 1.
    """

    lengths: tuple[int, ...]
    delta: float
    arms: int
    gamma: float
    V: int
    eps: tuple[float, ...]

    @property
    def comparator(self) -> np.ndarray:
        xc = np.full(self.arms, self.delta)
        xc[0] = 1.0 - (self.arms - 1) * self.delta
        return xc

    @property
    def slots(self) -> int:
        return sum(self.lengths)

    def slot_eps(self) -> np.ndarray:
        """Per-slot bias, blocks concatenated in order."""
        return np.concatenate([np.full(L, e) for L, e in zip(self.lengths, self.eps)])

    def block_losses(self, sign: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Draw one realization of the (block, slot, arm) loss tensor.

        The Bernoulli draws for E+ and E- are coupled through a shared uniform
        tape per (block, slot): call with the same generator state and the two
        environments differ only where the uniform falls between the two means.
        """
        if sign not in (+1, -1):
            raise PreconditionError("sign must be +1 or -1")
        out = []
        for L, e in zip(self.lengths, self.eps):
            u = rng.random(L)
            block = np.full((L, self.arms), 0.5)
            block[:, SPECIAL_ARM] = (u < 0.5 + sign * e).astype(float)
            out.append(block)
        return out


def make_hard_instance(lengths, delta: float, arms: int = 2) -> HardInstancePair:
    """Construct the hard-instance pair for block lengths L_1..L_n.

    gamma = 1/(32 sqrt(L_1 delta)), eps_m = gamma L_m / sqrt(V) with
    V = sum L_m^2; requires delta >= L_1 / (64 V) (which caps eps_m at 1/4)
    and delta <= 1/arms.
    """
    lengths = tuple(int(L) for L in lengths)
    if not lengths or any(L < 1 for L in lengths):
        raise PreconditionError("block lengths must be positive")
    if arms < 2:
        raise PreconditionError("need at least 2 arms")
    L1 = lengths[0]
    V = sum(L * L for L in lengths)
    if delta < L1 / (64.0 * V):
        raise PreconditionError(
            f"precondition delta >= L1/(64 V) fails: {delta} < {L1 / (64.0 * V)}")
    if delta > 1.0 / arms:
        raise PreconditionError(f"precondition delta <= 1/arms fails: {delta} > {1.0 / arms}")
    gamma = 1.0 / (32.0 * math.sqrt(L1 * delta))
    eps = tuple(gamma * L / math.sqrt(V) for L in lengths)
    return HardInstancePair(lengths=lengths, delta=delta, arms=arms,
                            gamma=gamma, V=V, eps=eps)


# ---------------------------------------------------------------------------
# delayed -> batched simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    actions_native: list[int]
    actions_batched: list[int]
    regret_native: float
    regret_batched: float
    decomposition: BucketDecomposition


def _full_loss_table(decomp: BucketDecomposition, block_losses: list[np.ndarray],
                     j: int, arms: int) -> LossTable:
    """The delayed-game loss table: zero prefix before bucket j, blocks after."""
    T = decomp.boundaries[-1] - 1
    losses = np.zeros((T, arms))
    for m in range(j, decomp.count + 1):
        rows = decomp.bucket(m)
        losses[rows.start - 1:rows.stop - 1, :] = block_losses[m - j]
    return LossTable(horizon=T, arms=arms, losses=losses)


def batched_simulate(learner_factory, delays: DelaySequence,
                     block_losses: list[np.ndarray], comparator: np.ndarray,
                     j: int = 1) -> SimulationResult:
    """Run a delayed learner natively and inside the batched wrapper.

    `learner_factory()` must build a fresh learner each call; couple the two
    runs by giving the factory a round-indexed action tape. The wrapper only
    learns a round's loss when its bucket ends (zero prefix rounds are known
    immediately) and delivers stored feedback at availability time
    tau_u = u + d_u + 1, i.e. just before the round that may first use it.
    """
    decomp = greedy_buckets(delays)
    if not (1 <= j <= decomp.count):
        raise PreconditionError("suffix start bucket out of range")
    if len(block_losses) != decomp.count - j + 1:
        raise PreconditionError("need one loss block per suffix bucket")
    arms = block_losses[0].shape[1]
    table = _full_loss_table(decomp, block_losses, j, arms)
    T = table.horizon
    d = delays.delays

    # --- native run -------------------------------------------------------
    native = learner_factory()
    queue = FeedbackQueue(T)
    actions_native: list[int] = []
    loss_native = 0.0
    for t in range(1, T + 1):
        _, arm = native.act(t)
        actions_native.append(arm)
        loss_native += table.row(t)[arm]
        queue.enqueue(FeedbackEvent(origin_round=t, arm=arm,
                                    loss_value=float(table.row(t)[arm]),
                                    arrival_round=t + int(d[t - 1])))
        native.receive(queue.step(t), t)

    # --- batched (wrapped) run --------------------------------------------
    wrapped = learner_factory()
    prefix_end = decomp.boundaries[j - 1] - 1
    store: dict[int, tuple[int, float]] = {}
    due_at: dict[int, list[int]] = {}
    for u in range(1, T + 1):
        tau = u + int(d[u - 1]) + 1
        if tau <= T:
            due_at.setdefault(tau, []).append(u)
    actions_batched: list[int] = []
    loss_batched = 0.0
    open_bucket: list[int] = []  # rounds of the current suffix bucket, pre-reveal
    for t in range(1, T + 1):
        events = []
        for u in due_at.get(t, []):
            if u not in store:
                raise SimulationIntegrityError(
                    f"round {u} feedback due at {t} before its bucket ended")
            arm_u, loss_u = store[u]
            events.append(FeedbackEvent(origin_round=u, arm=arm_u,
                                        loss_value=loss_u, arrival_round=t - 1))
        if t > 1:
            wrapped.receive(events, t - 1)
        _, arm = wrapped.act(t)
        actions_batched.append(arm)
        if t <= prefix_end:
            store[t] = (arm, 0.0)  # zero prefix: loss known immediately
        else:
            open_bucket.append(arm)
            m = decomp.bucket_of(t)
            if t == decomp.boundaries[m] - 1:  # bucket m just ended: reveal
                block = block_losses[m - j]
                start = decomp.boundaries[m - 1]
                for s, arm_s in enumerate(open_bucket):
                    store[start + s] = (arm_s, float(block[s, arm_s]))
                    loss_batched += float(block[s, arm_s])
                open_bucket = []

    comparator = np.asarray(comparator, dtype=float)
    loss_comp = float(np.sum(table.losses @ comparator))
    return SimulationResult(
        actions_native=actions_native,
        actions_batched=actions_batched,
        regret_native=loss_native - loss_comp,
        regret_batched=loss_batched - loss_comp,
        decomposition=decomp,
    )


# ---------------------------------------------------------------------------
# safety-gap identity probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    policy: str
    trials: int
    mean_regret: float
    mean_W: float
    predicted_regret: float  # gamma sqrt(V) (mean_W - delta)
    residual_mean: float     # per-trial mean of R - gamma sqrt(V) (W - delta)
    residual_se: float

    @property
    def ok(self) -> bool:
        if self.residual_se == 0.0:
            return abs(self.residual_mean) <= 1e-9
        return abs(self.residual_mean) <= 3.0 * self.residual_se


def safety_gap_probe(instance: HardInstancePair, policy: str, trials: int,
                     rng: np.random.Generator) -> ProbeResult:
    """Monte-Carlo check of the identity R+(x^c) = gamma sqrt(V) (E[W] - delta).

    Policies: "arm1" (always the anchor arm), "arm2" (always the biased arm),
    "comparator" (sample from x^c each slot). W is the length-weighted play
    fraction of the biased arm, sum_m L_m N_m / V.
    """
    if trials < 1:
        raise PreconditionError("trials must be positive")
    eps = instance.slot_eps()
    weights = np.concatenate([np.full(L, L / instance.V) for L in instance.lengths])
    delta = instance.delta
    n_slots = instance.slots

    # arm-2 losses under E+, one row per trial
    Z = (rng.random((trials, n_slots)) < 0.5 + eps).astype(float)
    comp_loss = np.sum(0.5 * (1.0 - delta) + delta * Z, axis=1)

    if policy == "arm1":
        play2 = np.zeros((trials, n_slots), dtype=bool)
    elif policy == "arm2":
        play2 = np.ones((trials, n_slots), dtype=bool)
    elif policy == "comparator":
        # with probability delta the comparator puts us on the biased arm
        U = rng.random((trials, n_slots))
        play2 = U < delta
    else:
        raise PreconditionError(f"unknown policy {policy!r}")

    learner_loss = np.sum(np.where(play2, Z, 0.5), axis=1)
    W = play2 @ weights
    regret = learner_loss - comp_loss
    scale = instance.gamma * math.sqrt(instance.V)
    residual = regret - scale * (W - delta)
    se = float(residual.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ProbeResult(
        policy=policy, trials=trials,
        mean_regret=float(regret.mean()), mean_W=float(W.mean()),
        predicted_regret=scale * (float(W.mean()) - delta),
        residual_mean=float(residual.mean()), residual_se=se,
    )
