"""Double/dueling Q-learning on a small fully-connected network.

The network, its gradients and the optimizers are written out by hand in
numpy: the whole model is two 32-unit ReLU layers plus linear heads, and
having explicit analytic gradients lets tests check them against central
finite differences.

Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a') when the dueling heads are
enabled; with dueling off the advantage head alone is the Q output.
Targets follow the double rule (argmax under the online net, value under
the target net) or the plain max rule, selected per config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ScenarioKind
from .env import Action, State

CHECKPOINT_MAGIC = "v2vlink-qnet"
CHECKPOINT_VERSION = 1


def encode_state(state: State, snr_min_db: float, snr_max_db: float,
                 episode_len: int) -> np.ndarray:
    """Network input: one-hot scenario, min-max SNR, episode progress.

    The SNR estimate is normalized against the configured true-SNR range
    and clipped to [0, 1]; the step index becomes n / N in (0, 1].
    """
    n_kinds = len(ScenarioKind)
    vec = np.zeros(n_kinds + 2)
    vec[state.scenario.index] = 1.0
    span = snr_max_db - snr_min_db
    vec[n_kinds] = min(1.0, max(0.0, (state.snr_est_db - snr_min_db) / span))
    vec[n_kinds + 1] = state.step_index / episode_len
    return vec


class QNetwork:
    """Two ReLU layers and linear value/advantage heads, parameters in
    plain numpy arrays."""

    def __init__(self, obs_dim, hidden, n_actions, dueling, params):
        self.obs_dim = obs_dim
        self.hidden = hidden
        self.n_actions = n_actions
        self.dueling = dueling
        self.params = params  # name -> array, insertion order fixed

    @classmethod
    def init(cls, obs_dim: int, hidden: int, n_actions: int, dueling: bool,
             rng: np.random.Generator) -> "QNetwork":
        """Uniform fan-in-scaled weights, zero biases."""
        def layer(n_in, n_out):
            bound = 1.0 / math.sqrt(n_in)
            return rng.uniform(-bound, bound, (n_in, n_out))

        params = {
            "W1": layer(obs_dim, hidden), "b1": np.zeros(hidden),
            "W2": layer(hidden, hidden), "b2": np.zeros(hidden),
        }
        if dueling:
            params["Wv"] = layer(hidden, 1)
            params["bv"] = np.zeros(1)
        params["Wa"] = layer(hidden, n_actions)
        params["ba"] = np.zeros(n_actions)
        return cls(obs_dim, hidden, n_actions, dueling, params)

    def forward(self, x: np.ndarray):
        """Batched Q values plus the activation cache for backward()."""
        p = self.params
        z1 = x @ p["W1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        adv = h2 @ p["Wa"] + p["ba"]
        if self.dueling:
            v = h2 @ p["Wv"] + p["bv"]
            q = v + adv - adv.mean(axis=1, keepdims=True)
        else:
            v = None
            q = adv
        return q, (x, z1, h1, z2, h2)

    def backward(self, cache, dq: np.ndarray) -> dict:
        """Gradients of a scalar loss given dL/dQ for the batch."""
        x, z1, h1, z2, h2 = cache
        p = self.params
        grads = {}
        if self.dueling:
            dv = dq.sum(axis=1, keepdims=True)
            dadv = dq - dq.mean(axis=1, keepdims=True)
            grads["Wv"] = h2.T @ dv
            grads["bv"] = dv.sum(axis=0)
            dh2 = dadv @ p["Wa"].T + dv @ p["Wv"].T
        else:
            dadv = dq
            dh2 = dadv @ p["Wa"].T
        grads["Wa"] = h2.T @ dadv
        grads["ba"] = dadv.sum(axis=0)
        dz2 = dh2 * (z2 > 0.0)
        grads["W2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["W2"].T
        dz1 = dh1 * (z1 > 0.0)
        grads["W1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def clone(self) -> "QNetwork":
        return QNetwork(self.obs_dim, self.hidden, self.n_actions,
                        self.dueling,
                        {k: v.copy() for k, v in self.params.items()})

    def save(self, path):
        """Text checkpoint: versioned header, layer dims, row-major rows."""
        lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
                 f"dueling {int(self.dueling)}",
                 f"dims {self.obs_dim} {self.hidden} {self.n_actions}"]
        for name, arr in self.params.items():
            a2 = np.atleast_2d(arr)
            lines.append(f"{name} {a2.shape[0]} {a2.shape[1]}")
            for row in a2:
                lines.append(" ".join(repr(float(v)) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
        magic, version = lines[0].rsplit(" ", 1)
        if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
            raise ValueError(f"not a {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} "
                             f"checkpoint: {lines[0]!r}")
        dueling = bool(int(lines[1].split()[1]))
        obs_dim, hidden, n_actions = map(int, lines[2].split()[1:])
        params = {}
        i = 3
        while i < len(lines):
            name, rows, cols = lines[i].split()
            rows, cols = int(rows), int(cols)
            block = [[float(tok) for tok in lines[i + 1 + r].split()]
                     for r in range(rows)]
            arr = np.asarray(block)
            params[name] = arr[0] if rows == 1 and name.startswith("b") else arr
            i += 1 + rows
        net = cls(obs_dim, hidden, n_actions, dueling, params)
        return net


def q_values(net: QNetwork, state_vec: np.ndarray) -> np.ndarray:
    """Q values of one encoded state."""
    q, _ = net.forward(state_vec[None, :])
    return q[0]


def select_flat(net: QNetwork, state_vec: np.ndarray, epsilon: float,
                rng: np.random.Generator) -> int:
    """Epsilon-greedy flat action index; greedy ties go to the lowest
    index.  One uniform draw is consumed whatever the branch."""
    if rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(q_values(net, state_vec)))


def act(net: QNetwork, state_vec: np.ndarray, epsilon: float,
        rng: np.random.Generator) -> Action:
    """Epsilon-greedy action over the 40-entry joint space."""
    return Action.from_flat(select_flat(net, state_vec, epsilon, rng))


@dataclass
class TrainConfig:
    """Training hyperparameters.

    `eps_decay_rate` is the per-step exponential rate; left unset it is
    chosen so epsilon reaches about 0.05 halfway through training,
    assuming 100-step episodes (the harness recomputes it for other
    episode lengths).

    `avg_tail_fractions` lists the trailing episode windows over which
    running parameter averages are kept; with several windows the run
    picks among them by greedy validation rollouts (see `train`).  An
    empty tuple disables averaging and delivers the last iterate.
    """

    batch_size: int = 32
    discount: float = 0.99
    learning_rate: float = 0.01
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_rate: float | None = None
    episodes: int = 4000
    target_sync_period: int = 1000
    replay_capacity: int = 20000
    hidden_units: int = 32
    optimizer: str = "adam"
    target_rule: str = "double"
    dueling: bool = True
    learn_start: int | None = None
    avg_tail_fractions: tuple = (0.5, 0.25, 0.125)
    validation_episodes: int = 20

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.target_rule not in ("double", "max"):
            raise ValueError("target_rule must be 'double' or 'max'")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        self.avg_tail_fractions = tuple(self.avg_tail_fractions)
        for frac in self.avg_tail_fractions:
            if not 0.0 < frac <= 1.0:
                raise ValueError("tail fractions must lie in (0, 1]")
        if len(set(self.avg_tail_fractions)) != len(self.avg_tail_fractions):
            raise ValueError("tail fractions must be distinct")
        if self.validation_episodes < 1:
            raise ValueError("validation_episodes must be positive")

    def resolved_for(self, episode_len: int) -> "TrainConfig":
        """Copy with the epsilon schedule tied to the true episode length;
        an explicitly configured rate is kept as-is."""
        if self.eps_decay_rate is not None:
            return self
        return replace(self, eps_decay_rate=eps_rate_for(self, episode_len))


def eps_rate_for(config: TrainConfig, episode_len: int = 100,
                 midway_eps: float = 0.05) -> float:
    """Decay rate putting epsilon at `midway_eps` after half the steps."""
    half = 0.5 * config.episodes * episode_len
    return math.log(config.eps_start / midway_eps) / half


def epsilon_at(config: TrainConfig, global_step: int) -> float:
    """Exploration rate after `global_step` completed steps."""
    rate = config.eps_decay_rate
    if rate is None:
        rate = eps_rate_for(config)
    eps = config.eps_start * math.exp(-rate * global_step)
    return max(config.eps_end, eps)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring; when full, the oldest transition is evicted.
    Sampling is uniform with replacement."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._states = np.empty((capacity, obs_dim))
        self._actions = np.empty(capacity, dtype=np.int64)
        self._rewards = np.empty(capacity)
        self._next_states = np.empty((capacity, obs_dim))
        self._terminals = np.empty(capacity)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, tr: Transition):
        i = self._pos
        self._states[i] = tr.state
        self._actions[i] = tr.action
        self._rewards[i] = tr.reward
        self._next_states[i] = tr.next_state
        self._terminals[i] = float(tr.terminal)
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, batch_size)
        return Batch(self._states[idx], self._actions[idx],
                     self._rewards[idx], self._next_states[idx],
                     self._terminals[idx])


def td_targets(batch: Batch, net: QNetwork, target: QNetwork,
               config: TrainConfig) -> np.ndarray:
    """Bootstrap targets; terminal transitions keep the bare reward.

    double: evaluate the online argmax under the target net.
    max:    plain max over the target net's Q values.
    """
    q_t, _ = target.forward(batch.next_states)
    if config.target_rule == "double":
        q_e, _ = net.forward(batch.next_states)
        a_star = np.argmax(q_e, axis=1)
        boot = q_t[np.arange(len(a_star)), a_star]
    else:
        boot = q_t.max(axis=1)
    return batch.rewards + config.discount * boot * (1.0 - batch.terminals)


def batch_loss(net: QNetwork, states, actions, targets) -> float:
    """MSE between the chosen actions' Q values and the given targets."""
    q, _ = net.forward(states)
    diff = q[np.arange(len(actions)), actions] - targets
    return float(np.mean(diff ** 2))


def _fit_batch(net: QNetwork, opt, states, actions, targets) -> float:
    """One gradient step of the selected-action MSE; returns the loss."""
    q, cache = net.forward(states)
    rows = np.arange(len(actions))
    diff = q[rows, actions] - targets
    loss = float(np.mean(diff ** 2))
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * diff / len(actions)
    grads = net.backward(cache, dq)
    opt.step(net.params, grads)
    return loss


class Adam:
    """Per-parameter adaptive-moment updates with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if name not in self._m:
                self._m[name] = np.zeros_like(g)
                self._v[name] = np.zeros_like(g)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    """Plain-gradient fallback."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict):
        for name, g in grads.items():
            params[name] -= self.lr * g


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate)
    return Sgd(config.learning_rate)


def train_step(net: QNetwork, target: QNetwork, buffer: ReplayBuffer,
               opt, config: TrainConfig, rng: np.random.Generator):
    """One replay update, or None while the buffer is still warming up."""
    learn_start = config.learn_start or config.batch_size
    if len(buffer) < max(learn_start, config.batch_size):
        return None
    batch = buffer.sample(config.batch_size, rng)
    targets = td_targets(batch, net, target, config)
    return _fit_batch(net, opt, batch.states, batch.actions, targets)


def sync_target(net: QNetwork, target: QNetwork):
    """Copy the online parameters into the target snapshot."""
    for name, arr in net.params.items():
        np.copyto(target.params[name], arr)


@dataclass
class EpisodeMetrics:
    episode: int
    cum_reward: float
    valid_actions: int
    mean_power_w: float
    mean_ee_mbps_per_w: float
    mean_throughput_mbps: float
    epsilon: float
    mean_loss: float


@dataclass
class CandidateScore:
    """Validation-rollout summary for one tail-averaged candidate."""
    fraction: float
    zero_reward_steps: int
    total_return: float
    chosen: bool = False


def pick_candidate(scores: list[CandidateScore],
                   tolerance_steps: int) -> CandidateScore:
    """Selection rule over validation rollouts: drop candidates that earn
    nothing notably more often than the best one, then take the highest
    return; ties go to the widest window."""
    floor = min(s.zero_reward_steps for s in scores)
    keep = [s for s in scores if s.zero_reward_steps <= floor + tolerance_steps]
    return max(keep, key=lambda s: (s.total_return, s.fraction))


@dataclass
class TrainResult:
    net: QNetwork
    target: QNetwork
    metrics: list[EpisodeMetrics]
    global_steps: int
    target_syncs: int
    buffer: ReplayBuffer
    avg_nets: dict = field(default_factory=dict)
    selection: list = field(default_factory=list)
    policy_fraction: float | None = None

    @property
    def policy_net(self) -> QNetwork:
        """The network to act greedily with: the selected tail average
        when one was accumulated, otherwise the last iterate."""
        if self.policy_fraction is not None:
            return self.avg_nets[self.policy_fraction]
        return self.net


def _default_encoder(env):
    proc = env.snr_process
    n = env.game.episode_len
    return lambda s: encode_state(s, proc.min_db, proc.max_db, n)


_SELECT_TOLERANCE = 0.01  # zero-reward slack between candidates, per step


def _validation_rollout(env, net: QNetwork, encoder, episodes: int,
                        n_steps: int) -> tuple[int, float]:
    """Greedy rollouts on the live environment, no storage and no
    updates; returns (zero-reward step count, total return)."""
    zeros = 0
    ret = 0.0
    for _ in range(episodes):
        obs = encoder(env.reset())
        for _ in range(n_steps):
            out = env.step(int(np.argmax(q_values(net, obs))))
            zeros += int(out.reward == 0.0)
            ret += out.reward
            obs = encoder(out.next_state)
    return zeros, ret


def train(env, config: TrainConfig, rng: np.random.Generator,
          encoder=None) -> TrainResult:
    """Run the full training loop against `env`.

    `env` needs reset() -> state, step(flat_action) -> outcome with
    .reward and .next_state, an `n_actions` attribute and a game with
    `episode_len`; LinkEnv satisfies this and small synthetic MDPs can
    too (pass their own `encoder`).  One update per environment step,
    target sync every `target_sync_period` global steps.

    A constant learning rate plus bootstrapped targets leaves the last
    iterate noticeably noisy, and the noise has structure: the parameters
    wander between more and less conservative decision thresholds on a
    timescale of hundreds of episodes, so no single trailing window is
    reliably representative.  The loop therefore keeps a running
    parameter average per window in `avg_tail_fractions`; when there is
    more than one finished window, each average is scored with
    `validation_episodes` greedy rollouts on the live environment
    (nothing is stored or trained) and `pick_candidate` decides which
    average the run delivers (TrainResult.policy_net).
    """
    if encoder is None:
        encoder = _default_encoder(env)
    cfg = config.resolved_for(env.game.episode_len)
    n_steps = env.game.episode_len

    state = env.reset()
    obs = encoder(state)
    net = QNetwork.init(obs.size, cfg.hidden_units, env.n_actions,
                        cfg.dueling, rng)
    target = net.clone()
    opt = make_optimizer(cfg)
    buffer = ReplayBuffer(cfg.replay_capacity, obs.size)

    power_levels = getattr(env, "model", None)
    power_levels = power_levels.power_levels_w if power_levels else None
    n_powers = len(power_levels) if power_levels else 0

    metrics = []
    global_step = 0
    syncs = 0
    windows = sorted(cfg.avg_tail_fractions, reverse=True)
    avg_from = {f: cfg.episodes - int(cfg.episodes * f) + 1 for f in windows}
    avg_params = {f: None for f in windows}
    avg_count = {f: 0 for f in windows}
    for episode in range(1, cfg.episodes + 1):
        if episode > 1:
            state = env.reset()
            obs = encoder(state)
        cum_reward = 0.0
        valid = 0
        power_sum = 0.0
        ee_sum = 0.0
        tp_sum = 0.0
        loss_sum = 0.0
        loss_n = 0
        eps = cfg.eps_start
        for n in range(1, n_steps + 1):
            eps = epsilon_at(cfg, global_step)
            flat = select_flat(net, obs, eps, rng)
            out = env.step(flat)
            next_obs = encoder(out.next_state)
            buffer.add(Transition(obs, flat, out.reward, next_obs,
                                  n == n_steps))
            loss = train_step(net, target, buffer, opt, cfg, rng)
            if loss is not None:
                loss_sum += loss
                loss_n += 1
            global_step += 1
            if global_step % cfg.target_sync_period == 0:
                sync_target(net, target)
                syncs += 1
            cum_reward += out.reward
            valid += int(getattr(out, "was_valid_action", False))
            if power_levels:
                power_sum += power_levels[flat % n_powers]
            ee_sum += getattr(out, "ee_mbps_per_w", 0.0)
            tp_sum += getattr(out, "throughput_mbps", 0.0)
            obs = next_obs
        metrics.append(EpisodeMetrics(
            episode, cum_reward, valid,
            power_sum / n_steps if power_levels else float("nan"),
            ee_sum / n_steps, tp_sum / n_steps, eps,
            loss_sum / loss_n if loss_n else float("nan")))
        for f in windows:
            if episode < avg_from[f]:
                continue
            avg_count[f] += 1
            if avg_params[f] is None:
                avg_params[f] = {k: v.copy() for k, v in net.params.items()}
            else:
                for k in avg_params[f]:
                    avg_params[f][k] += ((net.params[k] - avg_params[f][k])
                                         / avg_count[f])
    avg_nets = {f: QNetwork(net.obs_dim, net.hidden, net.n_actions,
                            net.dueling, p)
                for f, p in avg_params.items() if p is not None}
    selection = []
    policy_fraction = None
    if len(avg_nets) == 1:
        policy_fraction = next(iter(avg_nets))
    elif len(avg_nets) > 1:
        for f, cand in avg_nets.items():
            zeros, ret = _validation_rollout(env, cand, encoder,
                                             cfg.validation_episodes, n_steps)
            selection.append(CandidateScore(f, zeros, ret))
        tol = max(1, round(_SELECT_TOLERANCE
                           * cfg.validation_episodes * n_steps))
        best = pick_candidate(selection, tol)
        best.chosen = True
        policy_fraction = best.fraction
    return TrainResult(net, target, metrics, global_step, syncs, buffer,
                       avg_nets, selection, policy_fraction)


def greedy_policy(net: QNetwork, snr_min_db: float, snr_max_db: float,
                  episode_len: int):
    """Evaluation-time policy: argmax Q of the encoded state."""
    def policy(state: State, rewards=None) -> int:
        vec = encode_state(state, snr_min_db, snr_max_db, episode_len)
        return int(np.argmax(q_values(net, vec)))
    return policy


def gradient_check(net: QNetwork, states, actions, targets,
                   h: float = 1e-5) -> float:
    """Max per-parameter relative error of the analytic gradients against
    central finite differences of batch_loss."""
    q, cache = net.forward(states)
    rows = np.arange(len(actions))
    diff = q[rows, actions] - targets
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * diff / len(actions)
    grads = net.backward(cache, dq)

    worst = 0.0
    for name, arr in net.params.items():
        flat = arr.reshape(-1)
        gflat = np.asarray(grads[name]).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = batch_loss(net, states, actions, targets)
            flat[i] = keep - h
            down = batch_loss(net, states, actions, targets)
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            denom = max(1e-6, abs(numeric) + abs(gflat[i]))
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst
