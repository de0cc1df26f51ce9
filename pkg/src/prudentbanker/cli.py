"""Command-line interface: run / sweep / lowerbound / verify."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import lowerbound as lb
from .errors import ConfigError
from .harness import (SCALES, RunConfig, build_environment, emit,
                      load_config_file, run)
from .mirror import NEG_ENTROPY, TSALLIS_HALF, Regularizer
from .protocol import DelaySequence, EnvironmentConfig, outstanding_counters
from .prudent import PrudentBanker, build_comparator
from .rng import TapeSampler, stream


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--scale", choices=sorted(SCALES), default="desk")
    p.add_argument("--horizon", type=int)
    p.add_argument("--arms", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--delay-model", default="none",
                   choices=("none", "fixed-one-step", "geometric", "lomax"))
    p.add_argument("--learner", default="prudent-banker")
    p.add_argument("--regularizer", default=NEG_ENTROPY,
                   choices=(NEG_ENTROPY, TSALLIS_HALF))
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--alpha-safe", type=float, default=0.1)
    p.add_argument("--threshold-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/run")


def _config_from_args(args, seed=None, learner=None, delay_model=None) -> RunConfig:
    T, A, B = SCALES[args.scale]
    overrides = load_config_file(args.config) if args.config else {}

    def pick(name, flag_value, cast, default):
        if flag_value is not None:
            return flag_value
        if name in overrides:
            return cast(overrides[name])
        return default

    env = EnvironmentConfig(
        horizon=pick("horizon", args.horizon, int, T),
        arms=pick("arms", args.arms, int, A),
        blocks=pick("blocks", args.blocks, int, B),
        delay_model=delay_model or args.delay_model,
        seed=seed if seed is not None else args.seed,
    )
    return RunConfig(
        env=env,
        learner=learner or args.learner,
        regularizer=args.regularizer,
        delta=pick("delta", None, float, args.delta),
        alpha_safe=args.alpha_safe,
        threshold_scale=pick("threshold_scale", None, float, args.threshold_scale),
        seed=env.seed,
    )


def cmd_run(args) -> int:
    config = _config_from_args(args)
    trace = run(config)
    paths = emit(trace, args.out)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    print(json.dumps(trace.summary, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")]
    learners = args.learners.split(",")
    delay_models = args.delay_models.split(",")
    out_dir = Path(args.out)
    summaries = []
    for delay_model in delay_models:
        for seed in seeds:
            env_cfg = _config_from_args(args, seed=seed, delay_model=delay_model)
            table, delays = build_environment(env_cfg.env)
            for learner in learners:
                config = _config_from_args(args, seed=seed, learner=learner,
                                           delay_model=delay_model)
                trace = run(config, table=table, delays=delays)
                name = f"{learner}_{delay_model}_s{seed}"
                emit(trace, out_dir / name)
                summaries.append(trace.summary)
                print(f"{name}: regret*={trace.summary['regret_vs_best_fixed_arm']:.1f} "
                      f"comparator_gap={trace.summary['comparator_gap']:.1f}")
    (out_dir / "sweep_summary.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_lowerbound(args) -> int:
    q, N = args.q, args.n
    delays = lb.corollary_delays(q, N)
    decomp = lb.greedy_buckets(delays)
    T = len(delays)
    print(f"structured delays: q={q}, N={N}, T={T}, D={delays.total}")
    print(f"bucket boundaries: {decomp.boundaries}")
    print(f"bucket lengths:    {decomp.lengths}")
    lengths = decomp.lengths
    mono = all(lengths[i] >= lengths[i + 1] for i in range(len(lengths) - 1))
    dom = all(
        lengths[m] ** 2 >= sum(delays.delays[t - 1] for t in decomp.bucket(m + 2))
        for m in range(decomp.count - 1))
    suffix = all(
        decomp.suffix_mass(j) >= sum(int(delays.delays[t - 1])
                                     for mm in range(j + 1, decomp.count + 1)
                                     for t in decomp.bucket(mm))
        for j in range(1, decomp.count + 1))
    print(f"length monotonicity: {'pass' if mono else 'FAIL'}")
    print(f"quadratic dominance: {'pass' if dom else 'FAIL'}")
    print(f"suffix dominance:    {'pass' if suffix else 'FAIL'}")

    delta = args.delta
    instance = lb.make_hard_instance(decomp.lengths, delta, arms=2)
    print(f"hard instance: gamma={instance.gamma:.5f}, V={instance.V}, "
          f"eps={tuple(round(e, 5) for e in instance.eps)}")
    rng = stream(args.seed, "lowerbound-probe")
    all_ok = mono and dom and suffix
    for policy in ("arm1", "arm2", "comparator"):
        res = lb.safety_gap_probe(instance, policy, args.trials, rng)
        print(f"probe {policy:>10}: E[regret]={res.mean_regret:+.5f} "
              f"predicted={res.predicted_regret:+.5f} "
              f"residual={res.residual_mean:+.2e} (3se={3 * res.residual_se:.2e}) "
              f"{'pass' if res.ok else 'FAIL'}")
        all_ok = all_ok and res.ok

    # coupled delayed-vs-batched identity with the full learner
    reg = Regularizer(kind=NEG_ENTROPY, arms=2, delta=0.25)
    xc = build_comparator(2, 0.25, 0)
    tape = stream(args.seed, "lowerbound-tape").random(T)
    blocks = instance.block_losses(+1, stream(args.seed, "lowerbound-losses"))

    def factory():
        return PrudentBanker(reg, xc, T, TapeSampler(tape))

    sim = lb.batched_simulate(factory, delays, blocks[:decomp.count], xc)
    identical = sim.actions_native == sim.actions_batched
    print(f"delayed-vs-batched identity: {'pass' if identical else 'FAIL'} "
          f"(regret {sim.regret_native:+.4f} vs {sim.regret_batched:+.4f})")
    all_ok = all_ok and identical
    return 0 if all_ok else 1


def cmd_verify(args) -> int:
    ok = True
    rng = stream(args.seed, "verify")

    # outstanding-mass bound and double-counting identity on random sequences
    worst = True
    for _ in range(200):
        T = int(rng.integers(1, 60))
        d = rng.integers(0, 12, size=T)
        seq = DelaySequence(delays=d)
        start = int(rng.integers(1, T + 1))
        end = T
        _, DD = outstanding_counters(seq, start, end)
        window = range(start, end + 1)
        total = sum(int(d[r - 1]) for r in window)
        ident = sum(min(int(d[r - 1]), end - r) for r in window)
        worst &= DD <= total and DD == ident
    print(f"delay-counter identities: {'pass' if worst else 'FAIL'}")
    ok &= worst

    # credit conservation on a short delayed run
    config = RunConfig(env=EnvironmentConfig(horizon=2000, arms=5, blocks=10,
                                             delay_model="geometric", seed=args.seed),
                       delta=0.05)
    table, delays = build_environment(config.env)
    trace = run(config, table=table, delays=delays)
    # re-run to reach into the learner for ledger diagnostics
    from .harness import make_learner, best_fixed_arm
    istar, _ = best_fixed_arm(table)
    learner = make_learner(config, table, istar, 0.5)
    from .protocol import FeedbackEvent, FeedbackQueue
    queue = FeedbackQueue(config.env.horizon)
    for t in range(1, config.env.horizon + 1):
        _, arm = learner.act(t)
        queue.enqueue(FeedbackEvent(t, arm, float(table.row(t)[arm]),
                                    t + delays.delay(t)))
        learner.receive(queue.step(t), t)
    resid = learner.base.max_conservation_residual
    credit_ok = resid <= 1e-9 and learner.base.min_credit_seen >= -1e-12
    print(f"credit conservation: {'pass' if credit_ok else 'FAIL'} "
          f"(max residual {resid:.2e})")
    ok &= credit_ok

    # bucket inequalities on the structured sequence
    rc = cmd_lowerbound(argparse.Namespace(q=2, n=3, delta=0.25,
                                           trials=10000, seed=args.seed))
    ok &= rc == 0
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="prudentbanker",
        description="Safe delayed-bandit simulations and lower-bound checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single configured run")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid over seeds/delay models/learners")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--seeds", default="0,1,2,3,4")
    p_sweep.add_argument("--learners", default="prudent-banker,safe-exp3ix")
    p_sweep.add_argument("--delay-models", default="none,geometric")
    p_sweep.set_defaults(func=cmd_sweep)

    p_lb = sub.add_parser("lowerbound", help="bucket/identity report")
    p_lb.add_argument("--q", type=int, default=2)
    p_lb.add_argument("--n", type=int, default=3)
    p_lb.add_argument("--delta", type=float, default=0.25)
    p_lb.add_argument("--trials", type=int, default=100000)
    p_lb.add_argument("--seed", type=int, default=0)
    p_lb.set_defaults(func=cmd_lowerbound)

    p_verify = sub.add_parser("verify", help="quick invariant suites")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
