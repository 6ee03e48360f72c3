"""Acceptance gate: the properties the package must exhibit end to end.

Each test prints one [PASS]/[FAIL] line with the measured quantities
(run with `pytest tests/test_acceptance.py -s` to see them live) and
then asserts the same condition.  The desk-scale ordering tests train
three seeds per game with the all-defaults configuration and reuse
those runs for the constraint check, so the module takes roughly
twenty minutes of CPU; everything else finishes in seconds.
"""
import time
from fractions import Fraction

import numpy as np
import pytest

from test_agent import (_const_q_net, TINY_LEN, N_TINY_STATES, TinyMdp,
                        tiny_encoder, tiny_value_iteration)
from test_phy import _received_pair

from v2vlink.agent import (Batch, QNetwork, TrainConfig, gradient_check,
                           greedy_policy, q_values, td_targets, train)
from v2vlink.baselines import OraclePolicy, evaluate_policy
from v2vlink.config import ExperimentConfig, make_env, make_game, make_model
from v2vlink.env import N_ACTIONS, action_space
from v2vlink.harness import (artifact_paths, build_policy, make_traces,
                             run_training, seed_streams)
from v2vlink.phy import (MCS_TABLE, FrameSpec, SnrEstimationFailure,
                         energy_efficiency, estimate_snr, throughput)


def _report(name: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# --- gradient oracle ------------------------------------------------------

def test_gradient_oracle():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        hidden = int(rng.integers(8, 48))
        batch = int(rng.integers(4, 16))
        net = QNetwork.init(7, hidden, N_ACTIONS, dueling=True, rng=rng)
        states = rng.standard_normal((batch, 7))
        actions = rng.integers(0, N_ACTIONS, batch)
        targets = rng.standard_normal(batch)
        worst = max(worst, gradient_check(net, states, actions, targets))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-4 and elapsed < 10.0
    _report("gradient oracle", ok,
            f"worst relative error {worst:.3e} over 10 random net/batch "
            f"pairs (tolerance 1e-4), {elapsed:.1f} s (limit 10 s)")
    assert worst < 1e-4
    assert elapsed < 10.0


# --- tiny-MDP oracle ------------------------------------------------------

def test_tiny_mdp_matches_value_iteration():
    cfg = TrainConfig(episodes=300, hidden_units=8, replay_capacity=2000,
                      target_sync_period=100)
    want = tiny_value_iteration(cfg.discount, TINY_LEN)
    started = time.perf_counter()
    agree = 0
    for seed in range(5):
        res = train(TinyMdp(seed=seed), cfg,
                    np.random.default_rng(100 + seed), encoder=tiny_encoder)
        got = [int(np.argmax(q_values(res.policy_net, tiny_encoder(s))))
               for s in range(N_TINY_STATES)]
        agree += got == list(want)
    elapsed = time.perf_counter() - started
    ok = agree == 5 and elapsed < 60.0
    _report("tiny-MDP oracle", ok,
            f"trained greedy equals exact value iteration in {agree}/5 "
            f"seeded runs, {elapsed:.1f} s (limit 60 s)")
    assert agree == 5
    assert elapsed < 60.0


# --- throughput / EE arithmetic ------------------------------------------

def test_throughput_and_ee_determinism():
    started = time.perf_counter()
    frames = [FrameSpec.for_mcs(m, 100, 8e-6, 4e-5) for m in MCS_TABLE]
    pers = (0.0, 0.03, 0.1, 0.25, 0.5, 0.9)
    powers = (0.6, 0.8, 1.0, 1.2, 1.4)
    cases = [(mcs_i, per) for mcs_i in range(len(MCS_TABLE)) for per in pers]
    # the 64QAM-3/4, n_s = 100, per = 0.1 worked pair rounds out the grid
    cases += [(7, 0.1), (7, 0.1)]
    assert len(cases) == 50

    worst = 0.0
    for i, (mcs_i, per) in enumerate(cases):
        frame = frames[mcs_i]
        power = powers[i % len(powers)]
        share = (Fraction(100) * Fraction(8, 10 ** 6)
                 / (Fraction(100) * Fraction(8, 10 ** 6)
                    + Fraction(4, 10 ** 5)))
        rate = Fraction(MCS_TABLE[mcs_i].bits_per_symbol) / Fraction(8, 10 ** 6)
        tp_ref = float(rate * share * (1 - Fraction(per)) / 10 ** 6)
        ee_ref = float(Fraction(tp_ref) / Fraction(power))
        tp = throughput(frame, per)
        ee = energy_efficiency(tp, power)
        worst = max(worst,
                    abs(tp - tp_ref) / tp_ref if tp_ref else abs(tp),
                    abs(ee - ee_ref) / ee_ref if ee_ref else abs(ee))
    worked_tp = throughput(frames[7], 0.1)
    worked_ee = energy_efficiency(worked_tp, 1.4)
    worked_ok = (worked_tp == pytest.approx(23.142857142857146, rel=1e-12)
                 and worked_ee == pytest.approx(16.530612244897963, rel=1e-12))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-12 and worked_ok and elapsed < 1.0
    _report("throughput/EE arithmetic", ok,
            f"max relative error {worst:.2e} over 50 cases vs exact "
            f"rational arithmetic (tolerance 1e-12); worked case "
            f"{worked_tp:.6f} Mbps / {worked_ee:.6f} Mbps/W; "
            f"{elapsed:.2f} s (limit 1 s)")
    assert worst <= 1e-12
    assert worked_ok
    assert elapsed < 1.0


# --- SNR estimator calibration -------------------------------------------

def test_snr_estimator_calibration():
    rng = np.random.default_rng(99)
    started = time.perf_counter()
    worst = 0.0
    details = []
    for snr in (5.0, 10.0, 15.0, 20.0, 25.0):
        est = []
        for _ in range(1000):
            pair, p_t = _received_pair(snr, rng)
            try:
                est.append(estimate_snr(pair, p_t))
            except SnrEstimationFailure:
                continue
        bias = abs(float(np.mean(est)) - snr)
        worst = max(worst, bias)
        details.append(f"{snr:.0f}dB:{bias:+.3f}".replace("+", ""))
    elapsed = time.perf_counter() - started
    ok = worst <= 0.5 and elapsed < 30.0
    _report("SNR estimator calibration", ok,
            f"|mean - truth| per probe {{{', '.join(details)}}} dB, worst "
            f"{worst:.3f} (tolerance 0.5 dB, 1000 trials each), "
            f"{elapsed:.1f} s (limit 30 s)")
    assert worst <= 0.5
    assert elapsed < 30.0


# --- rate table and action space -----------------------------------------

def test_rate_table_and_action_space():
    started = time.perf_counter()
    rates = tuple(m.data_rate_mbps for m in MCS_TABLE)
    want = (3.0, 4.5, 6.0, 9.0, 12.0, 18.0, 24.0, 27.0)
    actions = action_space()
    elapsed = time.perf_counter() - started
    ok = rates == want and len(actions) == 40 and N_ACTIONS == 40
    _report("rate table and action space", ok,
            f"data rates {rates} Mbps, {len(actions)} actions, "
            f"{elapsed:.2f} s (limit 1 s)")
    assert rates == want
    assert len(actions) == 40
    assert elapsed < 1.0


# --- desk-scale ordering and the PER cap ----------------------------------

@pytest.fixture(scope="module")
def desk_runs():
    """Train three seeds per game with the all-defaults config and score
    everyone on the same frozen traces."""
    cfg = ExperimentConfig()
    model = make_model(cfg)
    out = {}
    started = time.perf_counter()
    for g in (1, 2):
        game = make_game(cfg, g)
        traces = make_traces(cfg, g)
        oracle = evaluate_policy(OraclePolicy(), game, traces, model)
        per_seed = {}
        for seed in cfg.seeds:
            tcfg = cfg.train.resolved_for(game.episode_len)
            env_rng, agent_rng = seed_streams(seed)
            result = train(make_env(cfg, game, env_rng), tcfg, agent_rng)
            policy = greedy_policy(result.policy_net, cfg.snr_min_db,
                                   cfg.snr_max_db, cfg.episode_len)
            per_seed[seed] = {
                "agent": evaluate_policy(policy, game, traces, model),
                "random": evaluate_policy(
                    build_policy("random", cfg, g, seed, None), game,
                    traces, model),
                "fixed": evaluate_policy(
                    build_policy("fixed", cfg, g, seed, None), game,
                    traces, model),
            }
        out[g] = {"oracle": oracle, "seeds": per_seed}
    out["wall_clock_s"] = time.perf_counter() - started
    return out


def test_desk_scale_ordering(desk_runs):
    lines = []
    ok = True
    for g in (1, 2):
        oracle = desk_runs[g]["oracle"]
        for seed, evals in desk_runs[g]["seeds"].items():
            agent, rnd, fix = (evals["agent"], evals["random"],
                               evals["fixed"])
            ratio = agent.cum_reward / oracle.cum_reward
            beats = (agent.valid_actions > rnd.valid_actions
                     and agent.valid_actions > fix.valid_actions
                     and agent.cum_reward > rnd.cum_reward
                     and agent.cum_reward > fix.cum_reward)
            ok = ok and ratio >= 0.85 and beats
            lines.append(
                f"game {g} seed {seed}: {ratio:.1%} of oracle reward, "
                f"valid {agent.valid_actions} vs random "
                f"{rnd.valid_actions} / fixed {fix.valid_actions}")
    minutes = desk_runs["wall_clock_s"] / 60.0
    _report("desk-scale ordering", ok,
            "; ".join(lines) + f"; 6 default-config runs in "
            f"{minutes:.1f} min (target < 20 min)")
    for g in (1, 2):
        oracle = desk_runs[g]["oracle"]
        for seed, evals in desk_runs[g]["seeds"].items():
            agent = evals["agent"]
            assert agent.cum_reward >= 0.85 * oracle.cum_reward
            for other in ("random", "fixed"):
                assert agent.valid_actions > evals[other].valid_actions
                assert agent.cum_reward > evals[other].cum_reward


def test_per_cap_enforcement(desk_runs):
    lines = []
    ok = True
    for seed, evals in desk_runs[2]["seeds"].items():
        agent = evals["agent"]
        fraction = agent.violations / agent.n_steps
        ok = ok and fraction < 0.05
        lines.append(f"seed {seed}: {agent.violations}/{agent.n_steps} "
                     f"steps over the PER budget ({fraction:.2%})")
    _report("PER cap enforcement", ok,
            "; ".join(lines) + " (threshold 5%)")
    for evals in desk_runs[2]["seeds"].values():
        agent = evals["agent"]
        assert agent.violations / agent.n_steps < 0.05


# --- double-vs-max target ablation ----------------------------------------

def test_double_target_ablation():
    started = time.perf_counter()
    online = _const_q_net([5.0, 1.0, 1.0])
    tgt = _const_q_net([0.0, 2.0, 7.0])
    batch = Batch(states=np.zeros((2, 2)), actions=np.array([0, 1]),
                  rewards=np.array([1.0, 2.0]),
                  next_states=np.zeros((2, 2)), terminals=np.zeros(2))
    t_double = td_targets(batch, online, tgt,
                          TrainConfig(target_rule="double", discount=0.5))
    t_max = td_targets(batch, online, tgt,
                       TrainConfig(target_rule="max", discount=0.5))
    differ = bool(np.all(t_double != t_max))

    tied = _const_q_net([2.0, 9.0, 4.0])
    t_d2 = td_targets(batch, tied, tied, TrainConfig(target_rule="double"))
    t_m2 = td_targets(batch, tied, tied, TrainConfig(target_rule="max"))
    coincide = bool(np.allclose(t_d2, t_m2, atol=1e-12))
    elapsed = time.perf_counter() - started
    ok = differ and coincide and elapsed < 1.0
    _report("double-vs-max targets", ok,
            f"targets differ when argmaxes disagree ({t_double.tolist()} vs "
            f"{t_max.tolist()}) and coincide when nets are tied; "
            f"{elapsed:.2f} s (limit 1 s)")
    assert differ
    assert coincide
    assert elapsed < 1.0


# --- byte-identical reruns -------------------------------------------------

def test_reproducible_csvs(tmp_path):
    cfg = ExperimentConfig(
        episode_len=5, eval_episodes=2, seeds=(1,),
        train=TrainConfig(episodes=4, batch_size=4, learn_start=4,
                          hidden_units=8, replay_capacity=50))
    run_training(cfg, 2, out_dir=tmp_path / "a")
    run_training(cfg, 2, out_dir=tmp_path / "b")
    pa = artifact_paths(tmp_path / "a", "d3qn", 2, 1)
    pb = artifact_paths(tmp_path / "b", "d3qn", 2, 1)
    same_csv = pa["episodes"].read_bytes() == pb["episodes"].read_bytes()
    same_net = pa["checkpoint"].read_bytes() == pb["checkpoint"].read_bytes()
    ok = same_csv and same_net
    _report("byte-identical reruns", ok,
            f"episode CSVs identical: {same_csv}; checkpoints identical: "
            f"{same_net} (same config and seed, two runs)")
    assert same_csv
    assert same_net
