import math

import numpy as np
import pytest

from prudentbanker.errors import ConfigError
from prudentbanker.harness import RunConfig, build_environment, run
from prudentbanker.mirror import NEG_ENTROPY, Regularizer
from prudentbanker.protocol import EnvironmentConfig, FeedbackEvent, FeedbackQueue
from prudentbanker.prudent import (PrudentBanker, ThresholdFunctions,
                                   build_comparator, gap_statistic,
                                   next_delay_estimate)
from prudentbanker.rng import RngSampler, stream

LARGE_TF = ThresholdFunctions(horizon=50000, c1=math.log(100), c2=1000.0, delta=0.001)


def make_learner(arms=4, delta=0.1, horizon=100, seed=0, scale=1.0):
    reg = Regularizer(NEG_ENTROPY, arms, delta)
    xc = build_comparator(arms, delta, 0)
    return PrudentBanker(reg, xc, horizon, RngSampler(stream(seed, "act")),
                         threshold_scale=scale)


# -- threshold functions ----------------------------------------------------

def test_rhat_values():
    c = math.sqrt(LARGE_TF.c1 * LARGE_TF.c2)
    assert LARGE_TF.rhat(0) == pytest.approx(3.0 * c * math.sqrt(50000))
    assert LARGE_TF.rhat(1) - LARGE_TF.rhat(0) == pytest.approx(
        c * 7.0 * math.sqrt(2.0 * math.log(2.0)))
    D = 0
    probes = [LARGE_TF.rhat(D) for D in (0, 1, 2, 4, 100, 10000)]
    assert probes == sorted(probes)


def test_xi_values():
    assert LARGE_TF.xi(0) == 0.0
    assert LARGE_TF.xi(1) == pytest.approx((3.0 - 1.0) / 0.001)
    tf = ThresholdFunctions(horizon=10, c1=1.0, c2=1.0, delta=0.5)
    assert tf.xi(3) == pytest.approx((5.0 - 1.0) / 0.5)


def test_restart_threshold_composition():
    for D in (0, 1, 7, 1024):
        assert LARGE_TF.restart_threshold(D) == pytest.approx(
            2.0 * LARGE_TF.rhat(D) + LARGE_TF.xi(D))
    assert LARGE_TF.restart_threshold(0) == pytest.approx(
        2.0 * 3.0 * math.sqrt(LARGE_TF.c1 * LARGE_TF.c2 * 50000))
    for D in (1, 2, 8, 512):
        assert LARGE_TF.restart_threshold(2 * D) >= LARGE_TF.restart_threshold(D)


# -- gap statistic ----------------------------------------------------------

def test_gap_statistic_examples():
    xc = np.full(3, 1.0 / 3)
    assert gap_statistic(np.zeros(3), xc) == 0.0
    assert gap_statistic(np.array([1.0, 0.0, 0.0]), xc) == pytest.approx(1.0 / 3)


def test_gap_statistic_vertex_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        A = int(rng.integers(2, 7))
        g = rng.normal(scale=10.0, size=A)
        xc = rng.dirichlet(np.ones(A))
        brute = max(float(np.dot(g, xc) - g[a]) for a in range(A))
        assert gap_statistic(g, xc) == brute


# -- comparator -------------------------------------------------------------

def test_build_comparator():
    xc = build_comparator(100, 0.001, 7)
    assert xc[7] == pytest.approx(0.901)
    assert xc.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(build_comparator(4, 0.25, 2), 0.25)
    np.testing.assert_allclose(build_comparator(2, 0.25, 0), [0.75, 0.25])
    with pytest.raises(ConfigError):
        build_comparator(4, 0.3, 0)


# -- hard restarts ----------------------------------------------------------

def test_next_delay_estimate_doubling():
    assert next_delay_estimate(3) == 4
    assert next_delay_estimate(4) == 4
    assert next_delay_estimate(5) == 8
    assert next_delay_estimate(1) == 1
    for trigger in range(2, 200):
        est = next_delay_estimate(trigger)
        assert est >= trigger
        assert est < 2 * trigger
        assert est & (est - 1) == 0  # power of two


def test_hard_restart_fires_and_resets():
    learner = make_learner()
    learner.stage_delay = 3
    dist, _ = learner.act(5)
    assert learner.stage == 2
    assert learner.delay_estimate == 4
    assert learner.stage_start == 6 and learner.phase_start == 6
    assert learner.phase == 1 and learner.stage_delay == 0
    # restart round still plays the mixture anchored at the uniform base point
    expected = learner.alpha * learner.reg.x0 + (1 - learner.alpha) * learner.xc
    np.testing.assert_allclose(dist, expected)
    rec = learner.restarts[-1]
    assert rec.kind == "hard" and rec.new_estimate == 4 and rec.trigger == 3.0


def test_hard_restart_exact_power():
    learner = make_learner()
    learner.stage_delay = 4
    learner.act(5)
    assert learner.delay_estimate == 4


def test_no_hard_restart_below_estimate():
    learner = make_learner()
    learner.delay_estimate = 8
    learner.stage_delay = 8
    learner.act(5)
    assert learner.stage == 1 and learner.delay_estimate == 8


def test_restart_round_feedback_excluded_from_new_stage():
    learner = make_learner()
    learner.stage_delay = 3
    _, arm = learner.act(5)  # hard restart at round 5
    # feedback for round 5 (origin < new stage start) must not count
    learner.receive([FeedbackEvent(5, arm, 0.5, 7)], 7)
    assert learner.stage_delay == 0
    assert 5 not in learner.base.records


# -- soft restarts ----------------------------------------------------------

def test_soft_restart_doubles_alpha():
    learner = make_learner(horizon=100)
    a1 = learner.alpha
    assert a1 < 1.0
    threshold = learner.tf.restart_threshold(learner.delay_estimate)
    learner._g[:] = 0.0
    learner._g[1] = -(2.0 * threshold + 10.0)  # drive min g down: gap > B
    learner.receive([], 10)
    assert learner.phase == 2
    assert learner.alpha == pytest.approx(min(2 * a1, 1.0))
    assert learner.phase_start == 11
    assert np.all(learner._g == 0.0)
    assert learner.restarts[-1].kind == "soft"


def test_soft_restart_not_below_threshold():
    learner = make_learner()
    learner._g[0] = 1.0
    learner.receive([], 10)
    assert learner.phase == 1


def test_no_soft_restart_at_full_aggression():
    learner = make_learner(scale=1e-9)  # tiny thresholds force alpha = 1
    assert learner.alpha == 1.0
    learner._g[1] = -1e9
    learner.receive([], 10)
    assert learner.phase == 1  # guard clause


# -- acting -----------------------------------------------------------------

def test_act_mixture_arithmetic():
    xhat = np.array([1.0, 0.0])
    xc = np.array([0.5, 0.5])
    np.testing.assert_allclose(0.5 * xhat + 0.5 * xc, [0.75, 0.25])
    learner = make_learner(arms=2, delta=0.25)
    learner.alpha = 0.5
    dist, _ = learner.act(1)  # prediction at round 1 is uniform
    np.testing.assert_allclose(dist, 0.5 * np.array([0.5, 0.5]) + 0.5 * learner.xc)


def test_played_probabilities_floor_and_weight_cap():
    cfg = RunConfig(env=EnvironmentConfig(horizon=800, arms=5, blocks=8,
                                          delay_model="geometric", seed=2),
                    delta=0.05, seed=2)
    trace = run(cfg, keep_learner=True)
    learner = trace.learner
    assert np.all(trace.alpha <= 0.5)
    # whenever alpha <= 1/2 every importance weight is at most 2/delta
    for rec in learner.base.records.values():
        if rec.est_weight is not None:
            assert rec.est_weight <= 2.0 / 0.05 + 1e-9


# -- run-level invariants ---------------------------------------------------

def test_no_delay_run_single_stage():
    cfg = RunConfig(env=EnvironmentConfig(horizon=1000, arms=4, blocks=10,
                                          delay_model="none", seed=0),
                    delta=0.1, seed=0)
    trace = run(cfg, keep_learner=True)
    assert trace.summary["stages"] == 1
    assert np.all(trace.stage == 1)
    assert not [r for r in trace.learner.restarts if r.kind == "hard"]


def test_hard_restart_bounds_on_delayed_runs():
    for seed in range(3):
        cfg = RunConfig(env=EnvironmentConfig(horizon=2000, arms=4, blocks=10,
                                              delay_model="geometric", seed=seed),
                        delta=0.1, seed=seed)
        _, delays = build_environment(cfg.env)
        trace = run(cfg, keep_learner=True)
        hard = [r for r in trace.learner.restarts if r.kind == "hard"]
        assert hard, "geometric delays should trigger hard restarts"
        for r in hard:
            assert r.new_estimate >= r.old_estimate
            assert r.new_estimate < 2 * r.trigger
        D = delays.total
        assert trace.summary["stages"] <= math.ceil(math.log2(D)) + 1


def test_missing_count_bound_during_run():
    # m missing rounds imply their realized delays sum to at least m(m+1)/2
    cfg = RunConfig(env=EnvironmentConfig(horizon=600, arms=4, blocks=6,
                                          delay_model="geometric", seed=1),
                    delta=0.1, seed=1)
    from prudentbanker.harness import best_fixed_arm, make_learner as build
    table, delays = build_environment(cfg.env)
    istar, _ = best_fixed_arm(table)
    learner = build(cfg, table, istar, 0.5)
    queue = FeedbackQueue(cfg.env.horizon)
    for t in range(1, cfg.env.horizon + 1):
        _, arm = learner.act(t)
        queue.enqueue(FeedbackEvent(t, arm, float(table.row(t)[arm]),
                                    t + delays.delay(t)))
        learner.receive(queue.step(t), t)
        m = len(learner.base.missing)
        realized = sum(delays.delay(u) for u in learner.base.missing)
        assert m * (m + 1) // 2 <= realized


def test_gap_stays_below_threshold_inside_phases():
    cfg = RunConfig(env=EnvironmentConfig(horizon=1500, arms=4, blocks=10,
                                          delay_model="geometric", seed=4),
                    delta=0.1, threshold_scale=0.02, seed=4)
    from prudentbanker.harness import best_fixed_arm, make_learner as build
    table, delays = build_environment(cfg.env)
    istar, _ = best_fixed_arm(table)
    learner = build(cfg, table, istar, 0.5)
    queue = FeedbackQueue(cfg.env.horizon)
    for t in range(1, cfg.env.horizon + 1):
        _, arm = learner.act(t)
        queue.enqueue(FeedbackEvent(t, arm, float(table.row(t)[arm]),
                                    t + delays.delay(t)))
        phase_before = (learner.stage, learner.phase)
        learner.receive(queue.step(t), t)
        if (learner.stage, learner.phase) == phase_before and learner.alpha < 1.0:
            assert learner.gap <= learner.tf.restart_threshold(learner.delay_estimate)
