"""Per-episode decision process for joint MCS and transmit-power selection.

An episode is a fixed number of packet transmissions.  Before each one the
radio sees an estimated SNR and an identified scenario; it then picks one
of 40 actions (8 MCS x 5 power levels).  Game 1 rewards throughput, Game 2
rewards energy efficiency subject to a packet-error-rate budget: an action
whose expected PER exceeds the budget earns zero.

The true per-transmission SNR stays hidden from the policy; rewards and
the exhaustive per-step oracle are computed from it.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import (ScenarioKind, ScenarioProfile, SnrProcess,
                      default_profile_table, frequency_response, next_true_snr,
                      sample_taps)
from .phy import (MCS_TABLE, N_MCS, FrameSpec, PerModel, SnrEstimationFailure,
                  estimate_snr, identify_scenario, per_all, throughput,
                  transmit_lts)

POWER_LEVELS_W = (0.6, 0.8, 1.0, 1.2, 1.4)
N_POWERS = len(POWER_LEVELS_W)
N_ACTIONS = N_MCS * N_POWERS

# Two expected rewards closer than this count as the same optimum.
VALID_TOL = 1e-9

DEFAULT_CARRIER_HZ = 5.9e9
DEFAULT_SUBCARRIER_SPACING_HZ = 10e6 / 64
DEFAULT_LTS_SLOT_S = 8e-6


class Game(Enum):
    THROUGHPUT = 1
    ENERGY_EFFICIENCY = 2


@dataclass(frozen=True)
class Action:
    """Joint choice of MCS index and transmit-power index."""

    mcs_index: int
    power_index: int

    def __post_init__(self):
        if not 0 <= self.mcs_index < N_MCS:
            raise ValueError("mcs_index out of range")
        if not 0 <= self.power_index < N_POWERS:
            raise ValueError("power_index out of range")

    @property
    def flat(self) -> int:
        return self.mcs_index * N_POWERS + self.power_index

    @property
    def power_w(self) -> float:
        return POWER_LEVELS_W[self.power_index]

    @classmethod
    def from_flat(cls, flat: int) -> "Action":
        if not 0 <= flat < N_ACTIONS:
            raise ValueError("flat action index out of range")
        return cls(flat // N_POWERS, flat % N_POWERS)


def action_space() -> tuple[Action, ...]:
    """All 40 actions ordered by flat index (MCS-major, power-minor)."""
    return tuple(Action.from_flat(i) for i in range(N_ACTIONS))


@dataclass
class State:
    """What the policy sees before a transmission."""

    scenario: ScenarioKind
    snr_est_db: float
    step_index: int


@dataclass
class GameSpec:
    """Objective, PER budget and episode length."""

    game: Game = Game.ENERGY_EFFICIENCY
    per_rated: float = 0.1
    episode_len: int = 100
    constrain_game1: bool = False

    def __post_init__(self):
        if not 0.0 < self.per_rated <= 1.0:
            raise ValueError("per_rated must lie in (0, 1]")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")


@dataclass
class StepOutcome:
    reward: float
    next_state: State
    per_realized: float
    throughput_mbps: float
    ee_mbps_per_w: float
    constraint_violated: bool
    was_valid_action: bool


class EpisodeOver(RuntimeError):
    """step() was called past the end of the episode (or before reset)."""


class LinkModel:
    """Expected-reward arithmetic shared by the env, the oracle and the
    search baselines: PER, throughput and energy efficiency for every
    action at a given true SNR."""

    def __init__(self, per_model: PerModel | None = None,
                 n_data_symbols: int = 100,
                 symbol_time_s: float = 8e-6,
                 overhead_time_s: float = 40e-6,
                 power_levels_w: tuple[float, ...] = POWER_LEVELS_W):
        self.per_model = per_model if per_model is not None else PerModel()
        self.n_data_symbols = n_data_symbols
        self.symbol_time_s = symbol_time_s
        self.overhead_time_s = overhead_time_s
        self.power_levels_w = tuple(power_levels_w)
        self.frames = tuple(
            FrameSpec.for_mcs(m, n_data_symbols, symbol_time_s, overhead_time_s)
            for m in MCS_TABLE)
        # goodput of each MCS at per = 0, in Mbps
        self.peak_rate_mbps = np.asarray(
            [throughput(f, 0.0) for f in self.frames])
        self._powers = np.asarray(self.power_levels_w)

    def error_rates(self, true_snr_db: float) -> np.ndarray:
        return per_all(self.per_model, true_snr_db)

    def tables(self, game: GameSpec, true_snr_db: float):
        """(rewards over 40 flat actions, per over 8 MCS, tp over 8 MCS)."""
        pers = self.error_rates(true_snr_db)
        tps = self.peak_rate_mbps * (1.0 - pers)
        violating = pers > game.per_rated
        if game.game is Game.THROUGHPUT:
            rewards = np.repeat(tps, N_POWERS)
            if game.constrain_game1:
                rewards = np.where(np.repeat(violating, N_POWERS), 0.0, rewards)
        else:
            ee = tps[:, None] / self._powers[None, :]
            ee[violating] = 0.0
            rewards = ee.ravel()
        return rewards, pers, tps

    def reward_table(self, game: GameSpec, true_snr_db: float) -> np.ndarray:
        """Expected reward of all 40 actions at one true SNR."""
        return self.tables(game, true_snr_db)[0]


def exhaustive_best(model: LinkModel, game: GameSpec,
                    true_snr_db: float) -> tuple[Action, float]:
    """Best action by full enumeration; ties go to the lowest flat index."""
    rewards = model.reward_table(game, true_snr_db)
    i = int(np.argmax(rewards))
    return Action.from_flat(i), float(rewards[i])


class LinkEnv:
    """Simulates the observation chain and scores actions.

    Each observation draws a fresh true SNR, a fresh Rayleigh tap set at
    the current frame time, synthesizes the LTS pair at that SNR and runs
    the difference estimator; the scenario label comes from tap-feature
    matching (optionally perturbed) or from an oracle that returns the
    configured truth.  All randomness flows through the injected generator.
    """

    def __init__(self, game: GameSpec, scenario: ScenarioKind,
                 snr_process: SnrProcess, model: LinkModel,
                 rng: np.random.Generator,
                 profile_table: dict[ScenarioKind, ScenarioProfile] | None = None,
                 si_mode: str = "features",
                 si_feature_noise: float = 0.05,
                 stochastic_packets: bool = False,
                 n_subcarriers: int = 64,
                 subcarrier_spacing_hz: float = DEFAULT_SUBCARRIER_SPACING_HZ,
                 carrier_hz: float = DEFAULT_CARRIER_HZ,
                 lts_slot_s: float = DEFAULT_LTS_SLOT_S):
        if si_mode not in ("features", "oracle"):
            raise ValueError("si_mode must be 'features' or 'oracle'")
        self.game = game
        self.scenario = scenario
        self.snr_process = snr_process
        self.model = model
        self.rng = rng
        self.profile_table = profile_table or default_profile_table()
        self.profile = self.profile_table[scenario]
        self.si_mode = si_mode
        self.si_feature_noise = si_feature_noise
        self.stochastic_packets = stochastic_packets
        self.n_subcarriers = n_subcarriers
        self.subcarrier_spacing_hz = subcarrier_spacing_hz
        self.carrier_hz = carrier_hz
        self.lts_slot_s = lts_slot_s
        self.frame_duration_s = (model.n_data_symbols * model.symbol_time_s
                                 + model.overhead_time_s)
        self._lts = np.ones(n_subcarriers)
        self._state: State | None = None
        self._true_snr_db: float | None = None

    n_actions = N_ACTIONS

    @property
    def state(self) -> State | None:
        return self._state

    @property
    def true_snr_db(self) -> float:
        if self._true_snr_db is None:
            raise EpisodeOver("reset() has not been called")
        return self._true_snr_db

    def _observe(self, step_index: int) -> State:
        """Draw the hidden SNR and synthesize what the radio measures."""
        gamma = next_true_snr(self.snr_process, self.rng)
        t = (step_index - 1) * self.frame_duration_s
        est = None
        for attempt in (0, 1):
            taps = sample_taps(self.profile, self.rng)
            h = frequency_response(taps, self.n_subcarriers,
                                   self.subcarrier_spacing_hz, t)
            sig_power = float(np.sum(h.real ** 2 + h.imag ** 2))
            noise_power = sig_power / 10.0 ** (gamma / 10.0)
            pair = transmit_lts(h, self._lts, noise_power, self.carrier_hz,
                                self.lts_slot_s, self.rng)
            p_t = (sig_power + noise_power) / self.n_subcarriers
            try:
                est = estimate_snr(pair, p_t, self.n_subcarriers)
                break
            except SnrEstimationFailure:
                if attempt:  # redraw once, then surface
                    raise
        if self.si_mode == "oracle":
            label = self.scenario
        else:
            delays = taps.path_delays_s
            dopplers = taps.doppler_shifts_hz
            if self.si_feature_noise > 0.0:
                m = delays.size
                g = self.rng.standard_normal(2 * m)
                delays = delays * (1.0 + self.si_feature_noise * g[:m])
                dopplers = dopplers * (1.0 + self.si_feature_noise * g[m:])
            label = identify_scenario(delays, dopplers, self.profile_table)
        self._true_snr_db = gamma
        return State(label, est, step_index)

    def reset(self) -> State:
        self._state = self._observe(1)
        return self._state

    def _advance(self) -> State:
        self._state = self._observe(self._state.step_index + 1)
        return self._state

    def step(self, action: Action | int) -> StepOutcome:
        if self._state is None:
            raise EpisodeOver("reset() has not been called")
        if self._state.step_index > self.game.episode_len:
            raise EpisodeOver("episode is over; call reset()")
        flat = action.flat if isinstance(action, Action) else int(action)
        if not 0 <= flat < N_ACTIONS:
            raise ValueError("action index out of range")
        mcs_i, p_i = divmod(flat, N_POWERS)
        power = self.model.power_levels_w[p_i]

        rewards, pers, tps = self.model.tables(self.game, self._true_snr_db)
        per_v = float(pers[mcs_i])
        violated = per_v > self.game.per_rated
        # validity is judged on expected rewards even in stochastic mode
        was_valid = bool(rewards[flat] >= rewards.max() - VALID_TOL)

        if self.stochastic_packets:
            delivered = float(self.rng.random() >= per_v)
            tp = float(self.model.peak_rate_mbps[mcs_i]) * delivered
        else:
            tp = float(tps[mcs_i])
        ee = tp / power

        if self.game.game is Game.THROUGHPUT:
            reward = 0.0 if (violated and self.game.constrain_game1) else tp
        else:
            reward = 0.0 if violated else ee

        next_state = self._advance()
        return StepOutcome(reward, next_state, per_v, tp, ee, violated,
                           was_valid)

    def expected_rewards(self) -> np.ndarray:
        """Expected reward of every action at the current hidden SNR."""
        return self.model.reward_table(self.game, self.true_snr_db)

    def oracle_best(self) -> tuple[Action, float]:
        """Exhaustive best action for the current state's true SNR."""
        return exhaustive_best(self.model, self.game, self.true_snr_db)


@dataclass
class EpisodeTrace:
    """Frozen observation sequence of one episode, replayable under any
    policy: hidden true SNR plus the estimated SNR and scenario label the
    policy would have seen."""

    true_snr_db: np.ndarray
    est_snr_db: np.ndarray
    scenario: tuple[ScenarioKind, ...]

    def __len__(self) -> int:
        return len(self.true_snr_db)


def generate_traces(env: LinkEnv, n_episodes: int) -> list[EpisodeTrace]:
    """Run the observation chain (no actions needed: observations do not
    depend on what was transmitted) and freeze the per-step draws."""
    traces = []
    for _ in range(n_episodes):
        st = env.reset()
        true_snr = [env.true_snr_db]
        est = [st.snr_est_db]
        labels = [st.scenario]
        for _ in range(env.game.episode_len - 1):
            st = env._advance()
            true_snr.append(env.true_snr_db)
            est.append(st.snr_est_db)
            labels.append(st.scenario)
        traces.append(EpisodeTrace(np.asarray(true_snr), np.asarray(est),
                                   tuple(labels)))
    return traces
