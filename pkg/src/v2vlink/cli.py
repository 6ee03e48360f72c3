"""Command-line front end.

Verbs: train, evaluate, compare, export-traces, gradcheck.  Every run is
reproducible from (config, seed); outputs are CSVs, checkpoints and
figures under the chosen output directory.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .agent import QNetwork, gradient_check
from .config import (ConfigError, ExperimentConfig, load_config, make_game,
                     make_model)
from .baselines import evaluate_policy
from .harness import (EVAL_EPISODE_HEADER, EVAL_STEP_HEADER, NET_VARIANTS,
                      POLICY_NAMES, build_policy, export_traces, make_traces,
                      run_comparison, run_training, summary_row, write_csv)

GRADCHECK_TOL = 1e-4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON experiment config (omit for all defaults)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed list with one seed")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default from config)")
    p.add_argument("--game", type=int, choices=(1, 2), default=None,
                   help="objective: 1 throughput, 2 energy efficiency")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2vlink",
        description="V2V link adaptation: train, evaluate and compare "
                    "policies on a simulated vehicular link.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train a network variant per seed")
    _add_common(p)
    p.add_argument("--policy", choices=NET_VARIANTS, default="d3qn",
                   help="network variant to train")

    p = sub.add_parser("evaluate", help="score one policy on frozen traces")
    _add_common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, required=True)
    p.add_argument("--episodes", type=int, default=None,
                   help="number of evaluation episodes")

    p = sub.add_parser("compare", help="score all policies on shared traces")
    _add_common(p)

    p = sub.add_parser("export-traces", help="write frozen traces as CSV")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("gradcheck",
                       help="check analytic gradients against finite "
                            "differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    return parser


def _config_for(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seeds=(args.seed,))
    return cfg


def _cmd_train(args) -> int:
    cfg = _config_for(args)
    records = run_training(cfg, args.game, variant=args.policy,
                           out_dir=args.out)
    for rec in records:
        last = rec.rows[-1]
        print(f"{rec.run_id}: {len(rec.rows)} episodes in "
              f"{rec.wall_clock_s:.1f} s, final cumulative reward "
              f"{last.cum_reward:.2f}, checkpoint {rec.checkpoint_path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _config_for(args)
    game_number = args.game if args.game is not None else cfg.game
    game = make_game(cfg, game_number)
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = build_policy(args.policy, cfg, game_number, cfg.seeds[0], out)
    traces = make_traces(cfg, game_number, n_episodes=args.episodes)
    result = evaluate_policy(policy, game, traces, make_model(cfg),
                             collect_steps=True)
    name = args.policy
    write_csv(out / f"eval_{name}_game{game_number}.csv",
              EVAL_EPISODE_HEADER,
              [(name, e.episode, e.cum_reward, e.valid_actions,
                e.mean_power_w, e.mean_ee_mbps_per_w, e.mean_throughput_mbps)
               for e in result.episodes])
    write_csv(out / f"eval_steps_{name}_game{game_number}.csv",
              EVAL_STEP_HEADER,
              [(name, s.episode, s.step, s.true_snr_db, s.est_snr_db,
                s.action_flat, s.reward, s.was_valid)
               for s in result.steps])
    row = summary_row(name, result, oracle_reward=0.0)
    print(f"{name}: cumulative reward {row['cum_reward']:.2f} over "
          f"{row['n_steps']} steps, valid fraction "
          f"{row['valid_fraction']:.3f}, violation fraction "
          f"{row['violation_fraction']:.3f}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _config_for(args)
    rows = run_comparison(cfg, args.game, out_dir=args.out)
    width = max(len(r["policy"]) for r in rows)
    print(f"{'policy':<{width}}  {'cum_reward':>12}  {'valid':>7}  "
          f"{'vs_oracle':>9}")
    for r in rows:
        print(f"{r['policy']:<{width}}  {r['cum_reward']:>12.2f}  "
              f"{r['valid_fraction']:>7.3f}  {r['reward_vs_oracle']:>9.3f}")
    return 0


def _cmd_export(args) -> int:
    cfg = _config_for(args)
    game_number = args.game if args.game is not None else cfg.game
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"traces_game{game_number}.csv"
    traces = export_traces(cfg, path, game_number, args.episodes)
    steps = sum(len(t) for t in traces)
    print(f"wrote {len(traces)} episodes ({steps} steps) to {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        dueling = trial % 2 == 0
        net = QNetwork.init(7, 16, 40, dueling, rng)
        states = rng.standard_normal((8, 7))
        actions = rng.integers(0, 40, 8)
        targets = rng.standard_normal(8)
        err = gradient_check(net, states, actions, targets)
        worst = max(worst, err)
        kind = "dueling" if dueling else "plain"
        print(f"trial {trial + 1:2d} ({kind:7s}): max rel err {err:.3e}")
    ok = worst < GRADCHECK_TOL
    print(f"worst {worst:.3e} {'<' if ok else '>='} {GRADCHECK_TOL:.0e} "
          f"-> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "export-traces": _cmd_export,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
