"""Experiment orchestration: seeded runs, CSV artifacts, comparisons.

Every run is a pure function of (config, seed): the environment, the
agent and each baseline draw from generators derived from the seed, no
wall-clock entropy is used anywhere, and metric CSVs are written with
round-tripping float reprs, so identical inputs give byte-identical
files.  Report paths also render figures next to the CSVs.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agent import (EpisodeMetrics, QNetwork, TrainConfig, greedy_policy,
                    train)
from .baselines import (EvalResult, FixedPolicy, OraclePolicy, PsoPolicy,
                        RandomPolicy, SaPolicy, evaluate_policy)
from .channel import ScenarioKind
from .config import (ExperimentConfig, config_hash, make_env, make_game,
                     make_model)
from .env import EpisodeTrace, generate_traces
from .plots import save_comparison_figure, save_training_figure

NET_VARIANTS = ("d3qn", "ddqn", "dqn")
POLICY_NAMES = ("d3qn", "ddqn", "dqn", "oracle", "pso", "sa", "random",
                "fixed")

# fixed per-purpose tags so every stream is derived, never shared
_ENV_STREAM, _AGENT_STREAM = 0, 1
_TRACE_TAG = 2
_POLICY_TAGS = {name: 10 + i for i, name in enumerate(POLICY_NAMES)}


@dataclass
class RunRecord:
    run_id: str
    config_hash: str
    rows: list[EpisodeMetrics]
    wall_clock_s: float
    code_version: str
    csv_path: str
    checkpoint_path: str


def _rng(entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent env and agent generators derived from one run seed."""
    return (_rng([seed, _ENV_STREAM]), _rng([seed, _AGENT_STREAM]))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


EPISODE_HEADER = ("episode", "cum_reward", "valid_actions", "mean_power_w",
                  "mean_ee_mbps_per_w", "mean_throughput_mbps", "epsilon",
                  "mean_loss")


def write_episode_csv(path, metrics: list[EpisodeMetrics]):
    write_csv(path, EPISODE_HEADER,
              [(m.episode, m.cum_reward, m.valid_actions, m.mean_power_w,
                m.mean_ee_mbps_per_w, m.mean_throughput_mbps, m.epsilon,
                m.mean_loss) for m in metrics])


def variant_train_config(config: ExperimentConfig, variant: str) -> TrainConfig:
    """Map a network variant name onto the agent's architecture flags.

    d3qn uses the configured training block as-is; ddqn turns the dueling
    heads off; dqn additionally falls back to plain-max targets.
    """
    from dataclasses import replace

    base = config.train
    if variant == "d3qn":
        return base
    if variant == "ddqn":
        return replace(base, dueling=False, target_rule="double")
    if variant == "dqn":
        return replace(base, dueling=False, target_rule="max")
    raise ValueError(f"unknown network variant {variant!r}")


def artifact_paths(out_dir, variant: str, game: int, seed: int) -> dict:
    out = Path(out_dir)
    stem = f"{variant}_game{game}_seed{seed}"
    return {
        "episodes": out / f"episodes_{stem}.csv",
        "checkpoint": out / f"checkpoint_{stem}.txt",
        "figure": out / f"training_{stem}.png",
        "run": out / f"run_{stem}.json",
    }


def run_training(config: ExperimentConfig, game_number: int | None = None,
                 seeds=None, variant: str = "d3qn",
                 out_dir=None) -> list[RunRecord]:
    """Train one network variant per seed and write its artifacts."""
    game = make_game(config, game_number)
    seeds = tuple(seeds) if seeds is not None else config.seeds
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = variant_train_config(config, variant).resolved_for(
        game.episode_len)
    chash = config_hash(config)

    records = []
    for seed in seeds:
        env_rng, agent_rng = seed_streams(seed)
        env = make_env(config, game, env_rng)
        started = time.perf_counter()
        result = train(env, tcfg, agent_rng)
        elapsed = time.perf_counter() - started
        paths = artifact_paths(out, variant, game.game.value, seed)
        write_episode_csv(paths["episodes"], result.metrics)
        # the tail-averaged weights are the deliverable policy
        result.policy_net.save(paths["checkpoint"])
        save_training_figure(result.metrics, paths["figure"],
                             f"{variant} game {game.game.value} seed {seed}")
        run_id = f"{chash}-{variant}-g{game.game.value}-s{seed}"
        rewards = [m.cum_reward for m in result.metrics]
        ees = [m.mean_ee_mbps_per_w for m in result.metrics]
        tail = max(1, len(rewards) // 10)
        summary = {
            "run_id": run_id,
            "config_hash": chash,
            "code_version": __version__,
            "variant": variant,
            "game": game.game.value,
            "seed": seed,
            "episodes": len(rewards),
            "global_steps": result.global_steps,
            "target_syncs": result.target_syncs,
            "avg_tail_fractions": list(tcfg.avg_tail_fractions),
            "policy_tail_fraction": result.policy_fraction,
            "selection": [{"fraction": s.fraction,
                           "zero_reward_steps": s.zero_reward_steps,
                           "total_return": s.total_return,
                           "chosen": s.chosen} for s in result.selection],
            "wall_clock_s": elapsed,
            "mean_reward_all_episodes": float(np.mean(rewards)),
            "mean_reward_last_tenth": float(np.mean(rewards[-tail:])),
            "mean_ee_all_episodes": float(np.mean(ees)),
            "mean_ee_last_tenth": float(np.mean(ees[-tail:])),
            "final_epsilon": result.metrics[-1].epsilon,
        }
        with open(paths["run"], "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        records.append(RunRecord(run_id, chash, result.metrics, elapsed,
                                 __version__, str(paths["episodes"]),
                                 str(paths["checkpoint"])))
    return records


def make_traces(config: ExperimentConfig, game_number: int | None = None,
                n_episodes: int | None = None,
                seed: int | None = None) -> list[EpisodeTrace]:
    """Frozen evaluation traces from a dedicated generator stream."""
    game = make_game(config, game_number)
    seed = seed if seed is not None else config.seeds[0]
    n = n_episodes if n_episodes is not None else config.eval_episodes
    env = make_env(config, game, _rng([seed, _TRACE_TAG]))
    return generate_traces(env, n)


TRACE_HEADER = ("episode", "step", "scenario", "true_snr_db", "est_snr_db")


def export_traces(config: ExperimentConfig, path,
                  game_number: int | None = None,
                  n_episodes: int | None = None,
                  seed: int | None = None) -> list[EpisodeTrace]:
    """Write frozen traces as CSV and return them."""
    traces = make_traces(config, game_number, n_episodes, seed)
    rows = []
    for ep_i, tr in enumerate(traces, start=1):
        for n in range(len(tr)):
            rows.append((ep_i, n + 1, tr.scenario[n].value,
                         float(tr.true_snr_db[n]), float(tr.est_snr_db[n])))
    write_csv(path, TRACE_HEADER, rows)
    return traces


def load_traces(path) -> list[EpisodeTrace]:
    """Read traces back; float reprs round-trip exactly."""
    by_episode: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_episode.setdefault(int(row["episode"]), []).append(row)
    traces = []
    for ep_i in sorted(by_episode):
        rows = sorted(by_episode[ep_i], key=lambda r: int(r["step"]))
        traces.append(EpisodeTrace(
            np.asarray([float(r["true_snr_db"]) for r in rows]),
            np.asarray([float(r["est_snr_db"]) for r in rows]),
            tuple(ScenarioKind(r["scenario"]) for r in rows)))
    return traces


EVAL_EPISODE_HEADER = ("policy", "episode", "cum_reward", "valid_actions",
                       "mean_power_w", "mean_ee_mbps_per_w",
                       "mean_throughput_mbps")
EVAL_STEP_HEADER = ("policy", "episode", "step", "true_snr_db", "est_snr_db",
                    "action_flat", "reward", "was_valid")
SUMMARY_HEADER = ("policy", "n_episodes", "n_steps", "cum_reward",
                  "mean_reward_per_episode", "valid_actions",
                  "valid_fraction", "mean_power_w", "mean_ee_mbps_per_w",
                  "mean_throughput_mbps", "violations", "violation_fraction",
                  "reward_vs_oracle")


def _load_checkpoint(out: Path, variant: str, game: int, seed: int) -> QNetwork:
    path = artifact_paths(out, variant, game, seed)["checkpoint"]
    if not path.exists():
        raise FileNotFoundError(
            f"no checkpoint for {variant!r} (game {game}, seed {seed}) at "
            f"{path}; run `v2vlink train --policy {variant}` first")
    return QNetwork.load(path)


def build_policy(name: str, config: ExperimentConfig, game_number: int,
                 seed: int, out_dir, train_missing: bool = False):
    """Instantiate a named policy, loading or training nets as needed."""
    if name in NET_VARIANTS:
        out = Path(out_dir if out_dir is not None else config.output_dir)
        try:
            net = _load_checkpoint(out, name, game_number, seed)
        except FileNotFoundError:
            if not train_missing:
                raise
            run_training(config, game_number, seeds=(seed,), variant=name,
                         out_dir=out)
            net = _load_checkpoint(out, name, game_number, seed)
        return greedy_policy(net, config.snr_min_db, config.snr_max_db,
                             config.episode_len)
    if name not in _POLICY_TAGS:
        raise ValueError(f"unknown policy {name!r}; choose from "
                         f"{POLICY_NAMES}")
    rng = _rng([seed, _POLICY_TAGS[name]])
    if name == "oracle":
        return OraclePolicy()
    if name == "pso":
        return PsoPolicy(config.pso, rng)
    if name == "sa":
        return SaPolicy(config.sa, rng, config.pso.fitness_evaluations)
    if name == "random":
        return RandomPolicy(rng)
    return FixedPolicy(config.fixed_action)


def summary_row(name: str, result: EvalResult, oracle_reward: float) -> dict:
    ratio = (result.cum_reward / oracle_reward if oracle_reward > 0
             else float("nan"))
    return {
        "policy": name,
        "n_episodes": len(result.episodes),
        "n_steps": result.n_steps,
        "cum_reward": result.cum_reward,
        "mean_reward_per_episode": result.cum_reward / len(result.episodes),
        "valid_actions": result.valid_actions,
        "valid_fraction": result.valid_actions / result.n_steps,
        "mean_power_w": result.mean_power_w,
        "mean_ee_mbps_per_w": result.mean_ee_mbps_per_w,
        "mean_throughput_mbps": result.mean_throughput_mbps,
        "violations": result.violations,
        "violation_fraction": result.violations / result.n_steps,
        "reward_vs_oracle": ratio,
    }


def run_comparison(config: ExperimentConfig, game_number: int | None = None,
                   out_dir=None, policies=POLICY_NAMES,
                   collect_steps: bool = True) -> list[dict]:
    """Score every policy on one shared frozen trace set.

    Network variants come from checkpoints under the output directory and
    are trained in place when missing.  Writes summary.csv, per-policy
    episode/step CSVs and the comparison figure; returns the summary rows.
    """
    g = game_number if game_number is not None else config.game
    game = make_game(config, g)
    model = make_model(config)
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config.seeds[0]
    traces = make_traces(config, g)

    results: dict[str, EvalResult] = {}
    for name in policies:
        policy = build_policy(name, config, g, seed, out, train_missing=True)
        results[name] = evaluate_policy(policy, game, traces, model,
                                        collect_steps=collect_steps)

    oracle_reward = results["oracle"].cum_reward if "oracle" in results else 0.0
    rows = [summary_row(name, res, oracle_reward)
            for name, res in results.items()]
    write_csv(out / f"summary_game{g}.csv", SUMMARY_HEADER,
              [tuple(r[k] for k in SUMMARY_HEADER) for r in rows])
    for name, res in results.items():
        write_csv(out / f"eval_{name}_game{g}.csv", EVAL_EPISODE_HEADER,
                  [(name, e.episode, e.cum_reward, e.valid_actions,
                    e.mean_power_w, e.mean_ee_mbps_per_w,
                    e.mean_throughput_mbps) for e in res.episodes])
        if collect_steps and res.steps is not None:
            write_csv(out / f"eval_steps_{name}_game{g}.csv",
                      EVAL_STEP_HEADER,
                      [(name, s.episode, s.step, s.true_snr_db, s.est_snr_db,
                        s.action_flat, s.reward, s.was_valid)
                       for s in res.steps])
    save_comparison_figure(rows, out / f"comparison_game{g}.png",
                           f"policy comparison, game {g}")
    return rows
