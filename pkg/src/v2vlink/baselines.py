"""Search and reference policies, and trace-based policy evaluation.

PSO and SA re-solve the action choice at every step through black-box
calls to the same expected-reward function the exhaustive oracle uses;
random and fixed span the bottom of the comparison.  All policies are
scored on frozen observation traces so every method sees identical
channel draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import (Action, EpisodeTrace, GameSpec, LinkModel, N_ACTIONS,
                  N_POWERS, State, VALID_TOL)
from .phy import N_MCS


@dataclass
class PsoParams:
    n_particles: int = 50
    inertia: float = 0.6
    cognitive: float = 1.2
    social: float = 1.8
    iterations: int = 30

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    @property
    def fitness_evaluations(self) -> int:
        """Total fitness calls per decision (init sweep + per-iteration)."""
        return self.n_particles * (self.iterations + 1)


@dataclass
class SaParams:
    initial_temp: float = 450.0
    final_temp: float = 0.0
    steps: int | None = None  # None: match the PSO evaluation budget

    def __post_init__(self):
        if self.initial_temp < 0 or self.final_temp < 0:
            raise ValueError("temperatures must be >= 0")


_BOX_HI = np.asarray([float(N_MCS), float(N_POWERS)])


def _reflect_into_box(x: np.ndarray) -> np.ndarray:
    """Fold positions back into [0, hi) by mirroring at the walls."""
    period = 2.0 * _BOX_HI
    t = np.mod(x, period)
    return np.minimum(t, period - t)


def _position_to_flat(x: np.ndarray) -> np.ndarray:
    """Floor a continuous (mcs, power) position to a flat action index."""
    mcs = np.minimum(np.floor(x[..., 0]).astype(int), N_MCS - 1)
    pw = np.minimum(np.floor(x[..., 1]).astype(int), N_POWERS - 1)
    return mcs * N_POWERS + pw


def pso_select(fitness, params: PsoParams, rng: np.random.Generator,
               init_positions: np.ndarray | None = None) -> Action:
    """Particle-swarm search over the continuous (mcs, power) box.

    Positions live in [0, 8) x [0, 5) and are floored to discrete actions
    for fitness calls; velocities and positions are unbounded except for
    reflection back into the box.  `fitness` maps a flat action index to
    its expected reward.
    """
    n = params.n_particles
    if init_positions is not None:
        x = np.array(init_positions, dtype=float)
        if x.shape != (n, 2):
            raise ValueError("init_positions must be (n_particles, 2)")
    else:
        x = rng.uniform(0.0, 1.0, (n, 2)) * _BOX_HI
    v = np.zeros((n, 2))

    def score(positions):
        flats = _position_to_flat(positions)
        return np.asarray([fitness(int(f)) for f in flats]), flats

    fit, flats = score(x)
    pbest_x = x.copy()
    pbest_fit = fit.copy()
    g = int(np.argmax(fit))
    gbest_x = x[g].copy()
    gbest_fit = float(fit[g])
    gbest_flat = int(flats[g])

    for _ in range(params.iterations):
        r1 = rng.random((n, 2))
        r2 = rng.random((n, 2))
        v = (params.inertia * v
             + params.cognitive * r1 * (pbest_x - x)
             + params.social * r2 * (gbest_x - x))
        x = _reflect_into_box(x + v)
        fit, flats = score(x)
        improved = fit > pbest_fit
        pbest_x[improved] = x[improved]
        pbest_fit[improved] = fit[improved]
        g = int(np.argmax(pbest_fit))
        if pbest_fit[g] > gbest_fit:
            gbest_fit = float(pbest_fit[g])
            gbest_x = pbest_x[g].copy()
            gbest_flat = int(_position_to_flat(pbest_x[g]))
    return Action.from_flat(gbest_flat)


def _neighbor(flat: int, rng: np.random.Generator) -> int:
    """Move one coordinate of (mcs, power) by one step, staying in range."""
    mcs, pw = divmod(flat, N_POWERS)
    moves = []
    if mcs > 0:
        moves.append((mcs - 1, pw))
    if mcs < N_MCS - 1:
        moves.append((mcs + 1, pw))
    if pw > 0:
        moves.append((mcs, pw - 1))
    if pw < N_POWERS - 1:
        moves.append((mcs, pw + 1))
    m, p = moves[int(rng.integers(len(moves)))]
    return m * N_POWERS + p


def sa_select(fitness, params: SaParams, rng: np.random.Generator,
              budget: int | None = None,
              init_flat: int | None = None) -> Action:
    """Simulated annealing over the 40 discrete actions.

    Single-coordinate neighbor moves, Metropolis acceptance exp(dr / T),
    temperature cooled linearly from `initial_temp` to `final_temp`.  The
    best action ever visited is returned, not the final one.
    """
    steps = params.steps if params.steps is not None else budget
    if steps is None:
        raise ValueError("sa_select needs a step budget")
    cur = int(rng.integers(N_ACTIONS)) if init_flat is None else int(init_flat)
    cur_fit = fitness(cur)
    best, best_fit = cur, cur_fit
    t0, tf = params.initial_temp, params.final_temp
    for k in range(steps):
        temp = t0 + (tf - t0) * (k + 1) / steps
        cand = _neighbor(cur, rng)
        cand_fit = fitness(cand)
        delta = cand_fit - cur_fit
        if delta >= 0 or (temp > 0 and rng.random() < math.exp(delta / temp)):
            cur, cur_fit = cand, cand_fit
            if cur_fit > best_fit:
                best, best_fit = cur, cur_fit
    return Action.from_flat(best)


def random_select(rng: np.random.Generator) -> Action:
    """Uniform draw over the whole action space."""
    return Action.from_flat(int(rng.integers(N_ACTIONS)))


def fixed_select(choice: Action | None = None) -> Action:
    """The configured constant action; default QPSK 1/2 at 1.0 W."""
    return choice if choice is not None else Action(2, 2)


class OraclePolicy:
    """Per-step exhaustive argmax of the expected reward."""

    def __call__(self, state: State, rewards: np.ndarray) -> int:
        return int(np.argmax(rewards))


class RandomPolicy:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def __call__(self, state, rewards) -> int:
        return random_select(self.rng).flat


class FixedPolicy:
    def __init__(self, choice: Action | None = None):
        self.flat = fixed_select(choice).flat

    def __call__(self, state, rewards) -> int:
        return self.flat


class PsoPolicy:
    def __init__(self, params: PsoParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def __call__(self, state, rewards) -> int:
        return pso_select(lambda i: float(rewards[i]), self.params,
                          self.rng).flat


class SaPolicy:
    def __init__(self, params: SaParams, rng: np.random.Generator,
                 budget: int):
        self.params = params
        self.rng = rng
        self.budget = budget

    def __call__(self, state, rewards) -> int:
        return sa_select(lambda i: float(rewards[i]), self.params, self.rng,
                         budget=self.budget).flat


@dataclass
class EvalEpisode:
    episode: int
    cum_reward: float
    valid_actions: int
    mean_power_w: float
    mean_ee_mbps_per_w: float
    mean_throughput_mbps: float


@dataclass
class StepRecord:
    episode: int
    step: int
    true_snr_db: float
    est_snr_db: float
    action_flat: int
    reward: float
    was_valid: bool


@dataclass
class EvalResult:
    episodes: list[EvalEpisode]
    cum_reward: float
    valid_actions: int
    n_steps: int
    violations: int
    steps: list[StepRecord] | None = None

    @property
    def mean_power_w(self) -> float:
        return float(np.mean([e.mean_power_w for e in self.episodes]))

    @property
    def mean_ee_mbps_per_w(self) -> float:
        return float(np.mean([e.mean_ee_mbps_per_w for e in self.episodes]))

    @property
    def mean_throughput_mbps(self) -> float:
        return float(np.mean([e.mean_throughput_mbps for e in self.episodes]))


def evaluate_policy(policy, game: GameSpec, traces: list[EpisodeTrace],
                    model: LinkModel, collect_steps: bool = False
                    ) -> EvalResult:
    """Replay `policy` over frozen traces and score every decision.

    The policy is called with the observed state and the per-step vector
    of expected rewards over all 40 actions (the privileged channel the
    oracle and the search baselines use; network and constant policies
    ignore it).  Rewards, validity and PER-budget violations are computed
    from the trace's hidden true SNR.
    """
    episodes = []
    steps = [] if collect_steps else None
    total_reward = 0.0
    total_valid = 0
    total_steps = 0
    violations = 0
    for ep_i, trace in enumerate(traces, start=1):
        cum = 0.0
        valid = 0
        power_sum = 0.0
        ee_sum = 0.0
        tp_sum = 0.0
        for n in range(1, len(trace) + 1):
            true_snr = float(trace.true_snr_db[n - 1])
            state = State(trace.scenario[n - 1],
                          float(trace.est_snr_db[n - 1]), n)
            rewards, pers, tps = model.tables(game, true_snr)
            flat = int(policy(state, rewards))
            mcs_i, p_i = divmod(flat, N_POWERS)
            reward = float(rewards[flat])
            ok = rewards[flat] >= rewards.max() - VALID_TOL
            cum += reward
            valid += int(ok)
            power_sum += model.power_levels_w[p_i]
            tp_sum += float(tps[mcs_i])
            ee_sum += float(tps[mcs_i]) / model.power_levels_w[p_i]
            if pers[mcs_i] > game.per_rated:
                violations += 1
            if collect_steps:
                steps.append(StepRecord(ep_i, n, true_snr,
                                        float(trace.est_snr_db[n - 1]),
                                        flat, reward, bool(ok)))
        n_steps = len(trace)
        episodes.append(EvalEpisode(ep_i, cum, valid, power_sum / n_steps,
                                    ee_sum / n_steps, tp_sum / n_steps))
        total_reward += cum
        total_valid += valid
        total_steps += n_steps
    return EvalResult(episodes, total_reward, total_valid, total_steps,
                      violations, steps)
