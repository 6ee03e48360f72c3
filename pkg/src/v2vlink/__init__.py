"""V2V link-level simulation with learned joint MCS / transmit-power
adaptation, plus search and constant baselines and a seeded experiment
harness."""

__version__ = "0.1.0"

from .channel import (ScenarioKind, ScenarioProfile, SnrProcess, TapSet,
                      default_profile_table, frequency_response,
                      load_profile_table, next_true_snr, profile_for,
                      sample_taps)
from .phy import (FrameSpec, McsEntry, Modulation, PerModel, LtsPair,
                  DegenerateLtsPairError, SnrEstimationFailure, energy_efficiency,
                  estimate_snr, identify_scenario, mcs_table, per, per_all,
                  throughput, transmit_lts)
from .env import (Action, EpisodeOver, EpisodeTrace, Game, GameSpec, LinkEnv,
                  LinkModel, POWER_LEVELS_W, State, StepOutcome, action_space,
                  exhaustive_best, generate_traces)
from .agent import (Adam, Batch, CandidateScore, EpisodeMetrics, QNetwork,
                    ReplayBuffer, Sgd, TrainConfig, TrainResult, Transition,
                    act, encode_state, epsilon_at, gradient_check,
                    greedy_policy, pick_candidate, q_values, sync_target,
                    td_targets, train, train_step)
from .baselines import (EvalResult, PsoParams, SaParams, evaluate_policy,
                        fixed_select, pso_select, random_select, sa_select)
from .config import (ConfigError, ExperimentConfig, config_hash, load_config,
                     make_env, make_game, make_model, save_config)
from .harness import (RunRecord, export_traces, load_traces, make_traces,
                      run_comparison, run_training)
