"""Reinforcement-learning control of reflection phases and power splits.

A small deep Q-network (two rectified hidden layers, experience replay,
periodic target copy) and a tabular Q-learning baseline share one discrete
action encoding: an action either snaps one reflection element to a point
on its phase grid or sets one user's raw power coefficient to a level in
{0.1..0.9}.  Cluster power vectors are renormalized to sum to 1 whenever an
allocation is built, so every state the agents can reach is physical.

The environment evaluates a state as the penalized NOMA sum rate (or the
orthogonal time-sharing rate, for the OMA comparison), recomputing the
zero-forcing precoder and the decoding order per evaluation.  Per-step
reward is the change in that objective, which makes the episode reward
telescope to the end-versus-start rate gain the period objective wants.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, SingularMatrixError
from .optim import Adam, clip_grad_norm
from .noma import (
    DecodingOrder,
    PowerAllocation,
    build_rate_report,
    oma_baseline,
    optimal_decoding_order,
    zf_precoder,
)

__all__ = [
    "AgentHyperparams",
    "StateVector",
    "ActionSpace",
    "Experience",
    "ReplayMemory",
    "QNetworkMlp",
    "QTable",
    "DqnAgent",
    "TabularAgent",
    "SlotContext",
    "SumRateEnv",
    "EpisodeResult",
    "TrainingResult",
    "reward",
    "epsilon_greedy",
    "mlp_forward",
    "dqn_train_step",
    "q_learning_update",
    "run_episode",
    "train_agent",
    "training_trace_to_csv",
]

TWO_PI = 2 * np.pi
DEFAULT_POWER_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class AgentHyperparams:
    """Learning-rate default suits the network path; the tabular rule runs
    at 0.1, which would blow up squared-loss gradient descent.

    epsilon is the initial exploration probability; each episode multiplies
    it by epsilon_decay down to the epsilon_min floor, so early episodes
    roam and late ones mostly exploit.
    """

    learning_rate: float = 1e-3
    discount: float = 0.8
    epsilon: float = 0.1
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.98
    replay_capacity: int = 10000
    minibatch_size: int = 32
    target_sync_period: int = 100
    steps_per_slot: int = 20
    grad_clip_norm: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.discount < 1):
            raise ValueError("discount must lie in [0, 1)")
        if not (0 <= self.epsilon <= 1):
            raise ValueError("epsilon must lie in [0, 1]")
        if not (0 <= self.epsilon_min <= 1):
            raise ValueError("epsilon_min must lie in [0, 1]")
        if not (0 < self.epsilon_decay <= 1):
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if self.minibatch_size < 1 or self.replay_capacity < self.minibatch_size:
            raise ValueError("replay capacity must cover at least one minibatch")

    def epsilon_at(self, episode_idx: int) -> float:
        return max(self.epsilon_min, self.epsilon * self.epsilon_decay**episode_idx)


@dataclass
class StateVector:
    """Raw control state: K phases plus one power coefficient per user."""

    thetas: np.ndarray
    power_coeffs: np.ndarray

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float) % TWO_PI
        self.power_coeffs = np.asarray(self.power_coeffs, dtype=float)
        if np.any(self.power_coeffs <= 0) or np.any(self.power_coeffs > 1):
            raise ValueError("power coefficients must lie in (0, 1]")

    def features(self) -> np.ndarray:
        """(2K + L,) network input; phases as (cos, sin) pairs to keep the
        wraparound continuous."""
        return np.concatenate(
            [np.cos(self.thetas), np.sin(self.thetas), self.power_coeffs]
        )

    def copy(self) -> "StateVector":
        return StateVector(
            thetas=self.thetas.copy(), power_coeffs=self.power_coeffs.copy()
        )


@dataclass
class ActionSpace:
    """Discrete joint control: K * 2^phase_bits phase actions followed by
    L * len(power_levels) power actions."""

    n_elements: int
    phase_bits: int
    n_users: int
    power_levels: tuple = DEFAULT_POWER_LEVELS

    def __post_init__(self):
        if self.n_elements < 1 or self.n_users < 1 or self.phase_bits < 1:
            raise ValueError("action space dimensions must be positive")
        self.phase_grid = TWO_PI * np.arange(2**self.phase_bits) / 2**self.phase_bits

    @property
    def n_phase_actions(self) -> int:
        return self.n_elements * 2**self.phase_bits

    @property
    def size(self) -> int:
        return self.n_phase_actions + self.n_users * len(self.power_levels)

    def describe(self, action: int) -> tuple:
        """("phase", element, value) or ("power", user, value)."""
        if not (0 <= action < self.size):
            raise ValueError(f"action {action} outside space of size {self.size}")
        levels = 2**self.phase_bits
        if action < self.n_phase_actions:
            return ("phase", action // levels, float(self.phase_grid[action % levels]))
        rest = action - self.n_phase_actions
        n_levels = len(self.power_levels)
        return ("power", rest // n_levels, float(self.power_levels[rest % n_levels]))

    def apply(self, state: StateVector, action: int) -> StateVector:
        kind, idx, value = self.describe(action)
        out = state.copy()
        if kind == "phase":
            out.thetas[idx] = value
        else:
            out.power_coeffs[idx] = value
        return out

    def state_key(self, state: StateVector) -> tuple:
        """Discretized key for the tabular path; assumes on-grid states."""
        step = TWO_PI / 2**self.phase_bits
        phase_idx = tuple(
            int(round(t / step)) % 2**self.phase_bits for t in state.thetas
        )
        levels = np.asarray(self.power_levels)
        power_idx = tuple(
            int(np.argmin(np.abs(levels - c))) for c in state.power_coeffs
        )
        return (phase_idx, power_idx)


@dataclass
class Experience:
    state: StateVector
    action: int
    reward: float
    next_state: StateVector

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"non-finite reward {self.reward}")


class ReplayMemory:
    """Bounded FIFO transition store with uniform no-replacement sampling."""

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buffer: deque[Experience] = deque(maxlen=capacity)

    def push(self, exp: Experience) -> None:
        self._buffer.append(exp)

    def sample(self, rng: SeededRng, n: int) -> list[Experience]:
        if n > len(self._buffer):
            raise ValueError(f"cannot sample {n} of {len(self._buffer)} transitions")
        picks = rng.choice(len(self._buffer), size=n, replace=False)
        return [self._buffer[int(i)] for i in picks]

    def __len__(self) -> int:
        return len(self._buffer)


_MLP_WEIGHTS = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class QNetworkMlp:
    """input -> hidden -> hidden -> one Q value per action, rectified."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @classmethod
    def initialize(
        cls, n_inputs: int, n_actions: int, rng: SeededRng, hidden: int = 128
    ) -> "QNetworkMlp":
        def layer(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        return cls(
            w1=layer(n_inputs, hidden),
            b1=np.zeros(hidden),
            w2=layer(hidden, hidden),
            b2=np.zeros(hidden),
            w3=layer(hidden, n_actions),
            b3=np.zeros(n_actions),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _MLP_WEIGHTS}

    def copy(self) -> "QNetworkMlp":
        return QNetworkMlp(**{k: v.copy() for k, v in self.params().items()})

    @property
    def n_actions(self) -> int:
        return self.b3.shape[0]


def _mlp_forward_batch(net: QNetworkMlp, x: np.ndarray) -> tuple[np.ndarray, dict]:
    z1 = x @ net.w1 + net.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ net.w2 + net.b2
    a2 = np.maximum(z2, 0.0)
    q = a2 @ net.w3 + net.b3
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("non-finite Q values")
    return q, {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2}


def _mlp_backward(net: QNetworkMlp, cache: dict, dq: np.ndarray) -> dict:
    grads = {}
    grads["w3"] = cache["a2"].T @ dq
    grads["b3"] = dq.sum(axis=0)
    da2 = dq @ net.w3.T
    dz2 = da2 * (cache["z2"] > 0)
    grads["w2"] = cache["a1"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ net.w2.T
    dz1 = da1 * (cache["z1"] > 0)
    grads["w1"] = cache["x"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return grads


def mlp_forward(net: QNetworkMlp, state: StateVector | np.ndarray) -> np.ndarray:
    """Q values for one state."""
    feats = state.features() if hasattr(state, "features") else np.asarray(state)
    q, _ = _mlp_forward_batch(net, feats[None, :])
    return q[0]


def epsilon_greedy(qvalues: np.ndarray, epsilon: float, rng: SeededRng) -> int:
    """Greedy with probability 1-eps (first index on ties), else uniform."""
    qvalues = np.asarray(qvalues)
    if qvalues.size == 0:
        raise ValueError("no actions to choose from")
    if not (0 <= epsilon <= 1):
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(qvalues.size))
    return int(np.argmax(qvalues))


def reward(rate_history: np.ndarray) -> float:
    """Period reward: per-user rate increments summed over consecutive
    slots.  Written as the literal double sum; it telescopes to the final
    rates minus the initial ones.
    """
    history = np.asarray(rate_history, dtype=float)
    if history.ndim != 2:
        raise ValueError(
            f"rate history must be (slots+1, users), got shape {history.shape}"
        )
    total = 0.0
    for step in range(1, history.shape[0]):
        total += float(np.sum(history[step] - history[step - 1]))
    return total


def dqn_train_step(
    net: QNetworkMlp,
    target_net: QNetworkMlp,
    batch: list[Experience],
    hp: AgentHyperparams,
    adam: Adam,
) -> float:
    """One squared-error descent step toward the frozen-target values.

    y_w = r_w + discount * max_a Q_target(s'_w, a); loss = sum of squared
    residuals on the taken actions.  Returns the pre-step loss.
    """
    if not batch:
        raise ValueError("empty minibatch")
    x = np.stack([e.state.features() for e in batch])
    x_next = np.stack([e.next_state.features() for e in batch])
    rewards = np.array([e.reward for e in batch])
    actions = np.array([e.action for e in batch])

    q_next, _ = _mlp_forward_batch(target_net, x_next)
    targets = rewards + hp.discount * q_next.max(axis=1)
    q, cache = _mlp_forward_batch(net, x)
    taken = q[np.arange(len(batch)), actions]
    residual = targets - taken
    loss = float(np.sum(residual**2))

    dq = np.zeros_like(q)
    dq[np.arange(len(batch)), actions] = -2.0 * residual
    grads = _mlp_backward(net, cache, dq)
    clip_grad_norm(grads, hp.grad_clip_norm)
    adam.step(net.params(), grads, hp.learning_rate)
    return loss


@dataclass
class QTable:
    """Per-state action-value rows, zero until visited."""

    n_actions: int
    values: dict = field(default_factory=dict)

    def row(self, key: tuple) -> np.ndarray:
        if key not in self.values:
            self.values[key] = np.zeros(self.n_actions)
        return self.values[key]

    def max_value(self, key: tuple) -> float:
        if key not in self.values:
            return 0.0
        return float(self.values[key].max())


def q_learning_update(
    table: QTable,
    key: tuple,
    action: int,
    r: float,
    next_key: tuple,
    hp: AgentHyperparams,
) -> float:
    """Standard one-step update; returns the new Q(s, a)."""
    row = table.row(key)
    target = r + hp.discount * table.max_value(next_key)
    row[action] += hp.learning_rate * (target - row[action])
    return float(row[action])


@dataclass
class DqnAgent:
    """Owns the online and target networks plus the replay buffer."""

    net: QNetworkMlp
    target_net: QNetworkMlp
    actions: ActionSpace
    hp: AgentHyperparams
    memory: ReplayMemory
    adam: Adam
    train_steps: int = 0

    @classmethod
    def create(
        cls,
        actions: ActionSpace,
        hp: AgentHyperparams,
        rng: SeededRng,
        hidden: int = 128,
    ) -> "DqnAgent":
        n_inputs = 2 * actions.n_elements + actions.n_users
        net = QNetworkMlp.initialize(
            n_inputs, actions.size, rng.substream("init"), hidden=hidden
        )
        return cls(
            net=net,
            target_net=net.copy(),
            actions=actions,
            hp=hp,
            memory=ReplayMemory(hp.replay_capacity),
            adam=Adam(),
        )

    def q_values(self, state: StateVector) -> np.ndarray:
        return mlp_forward(self.net, state)

    def act(self, state: StateVector, rng: SeededRng, epsilon: float | None = None) -> int:
        eps = self.hp.epsilon if epsilon is None else epsilon
        return epsilon_greedy(self.q_values(state), eps, rng)

    def greedy_action(self, state: StateVector) -> int:
        return int(np.argmax(self.q_values(state)))

    def observe(self, exp: Experience, rng: SeededRng) -> float | None:
        """Store the transition; train once the buffer can fill a batch.
        Returns the training loss, or None during warmup."""
        self.memory.push(exp)
        if len(self.memory) < self.hp.minibatch_size:
            return None
        batch = self.memory.sample(rng, self.hp.minibatch_size)
        loss = dqn_train_step(self.net, self.target_net, batch, self.hp, self.adam)
        self.train_steps += 1
        if self.train_steps % self.hp.target_sync_period == 0:
            self.target_net = self.net.copy()
        return loss


@dataclass
class TabularAgent:
    """Q-learning on the discretized state grid."""

    actions: ActionSpace
    hp: AgentHyperparams
    table: QTable

    @classmethod
    def create(cls, actions: ActionSpace, hp: AgentHyperparams) -> "TabularAgent":
        return cls(actions=actions, hp=hp, table=QTable(n_actions=actions.size))

    def q_values(self, state: StateVector) -> np.ndarray:
        return self.table.row(self.actions.state_key(state)).copy()

    def act(self, state: StateVector, rng: SeededRng, epsilon: float | None = None) -> int:
        eps = self.hp.epsilon if epsilon is None else epsilon
        return epsilon_greedy(self.q_values(state), eps, rng)

    def greedy_action(self, state: StateVector) -> int:
        return int(np.argmax(self.q_values(state)))

    def observe(self, exp: Experience, rng: SeededRng) -> float | None:
        q_learning_update(
            self.table,
            self.actions.state_key(exp.state),
            exp.action,
            exp.reward,
            self.actions.state_key(exp.next_state),
            self.hp,
        )
        return None


@dataclass
class SlotContext:
    """Frozen per-slot channel and clustering context.

    phase_response[u] is the (K, N) matrix linking the phase vector to user
    u's reflected row; direct[u] the bypass row; members the per-cluster
    global user lists; member_weights the responsibility weights used to
    blend the cluster's design row.  fixed_orders optionally pins decode
    permutations (used by the random-order study).
    """

    phase_response: list[np.ndarray] | None
    direct: list[np.ndarray]
    members: list[list[int]]
    member_weights: list[np.ndarray]
    fixed_orders: list[list[int]] | None = None


class SumRateEnv:
    """Pure state evaluator over frozen slot contexts.

    objective "noma" runs the clustered pipeline (precoder, decode order,
    penalized sum rate); "oma" scores the orthogonal time-sharing rate on
    the same rows.  A singular precoder scores zero rather than raising, so
    exploration can wander through degenerate phase sets.
    """

    def __init__(
        self,
        contexts: list[SlotContext],
        n_elements: int,
        total_power: float,
        noise_var: float,
        min_rate: float = 0.1,
        objective: str = "noma",
        order_policy: str = "optimal",
        alpha0: float = 0.1,
    ):
        if objective not in ("noma", "oma"):
            raise ValueError(f"unknown objective {objective!r}")
        if order_policy not in ("optimal", "fixed"):
            raise ValueError(f"unknown order policy {order_policy!r}")
        if order_policy == "fixed":
            for idx, ctx in enumerate(contexts):
                if ctx.fixed_orders is None:
                    raise ValueError(f"slot {idx} lacks fixed decode orders")
        self.contexts = contexts
        self.n_elements = n_elements
        self.total_power = total_power
        self.noise_var = noise_var
        self.min_rate = min_rate
        self.objective = objective
        self.order_policy = order_policy
        self.alpha0 = alpha0
        self.n_users = len(contexts[0].direct) if contexts else 0
        # Episodes restart from the same state and re-tread early prefixes,
        # so identical (slot, state) evaluations recur; cache them.
        self._memo: dict[tuple, float] = {}

    @property
    def n_slots(self) -> int:
        return len(self.contexts)

    def initial_state(self) -> StateVector:
        return StateVector(
            thetas=np.zeros(self.n_elements),
            power_coeffs=np.full(self.n_users, self.alpha0),
        )

    def user_rows(self, slot: int, thetas: np.ndarray) -> list[np.ndarray]:
        ctx = self.contexts[slot]
        phase_vec = np.exp(1j * np.asarray(thetas, dtype=float))
        rows = []
        for u in range(self.n_users):
            row = ctx.direct[u].astype(complex).copy()
            if ctx.phase_response is not None:
                row = row + phase_vec @ ctx.phase_response[u]
            rows.append(row)
        return rows

    def _allocation(self, state: StateVector, members: list[list[int]]) -> PowerAllocation:
        alphas = []
        for cluster in members:
            raw = np.array([state.power_coeffs[u] for u in cluster])
            alphas.append(raw / raw.sum())
        return PowerAllocation(alphas=alphas, total_power=self.total_power)

    def _noma_report(self, state: StateVector, slot: int):
        ctx = self.contexts[slot]
        rows = self.user_rows(slot, state.thetas)
        cluster_rows = [[rows[u] for u in cluster] for cluster in ctx.members]
        design = []
        for cluster, weights in zip(ctx.members, ctx.member_weights):
            blended = np.zeros(rows[0].shape[0], dtype=complex)
            for u, wgt in zip(cluster, weights):
                norm = np.linalg.norm(rows[u])
                if norm > 0:
                    blended = blended + wgt * rows[u] / norm
            design.append(blended / max(float(np.sum(weights)), 1e-300))
        precoder = zf_precoder(np.vstack(design), self.total_power)
        alloc = self._allocation(state, ctx.members)
        if self.order_policy == "fixed":
            order = DecodingOrder(orders=[list(p) for p in ctx.fixed_orders])
        else:
            order = optimal_decoding_order(
                cluster_rows, precoder, alloc, self.noise_var, self.min_rate
            )
        report = build_rate_report(
            cluster_rows, precoder, alloc, order, self.noise_var, self.min_rate
        )
        return report, ctx

    def report(self, state: StateVector, slot: int):
        """RateReport for the slot, or None when the precoder is singular."""
        try:
            report, _ = self._noma_report(state, slot)
        except SingularMatrixError:
            return None
        return report

    def evaluate(self, state: StateVector, slot: int) -> float:
        key = (slot, state.thetas.tobytes(), state.power_coeffs.tobytes())
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        if self.objective == "oma":
            rows = self.user_rows(slot, state.thetas)
            value = oma_baseline(rows, self.total_power, self.noise_var)
        else:
            try:
                report, _ = self._noma_report(state, slot)
                value = report.sum_rate
            except SingularMatrixError:
                value = 0.0
        self._memo[key] = value
        return value

    def user_rates(self, state: StateVector, slot: int) -> np.ndarray:
        """Per-user effective rates in global user order."""
        if self.objective == "oma":
            rows = self.user_rows(slot, state.thetas)
            per_user = np.empty(self.n_users)
            for u, row in enumerate(rows):
                snr = (
                    self.total_power
                    * float(np.sum(np.abs(row) ** 2))
                    / self.noise_var
                )
                per_user[u] = math.log2(1 + snr) / self.n_users
            return per_user
        rates = np.zeros(self.n_users)
        try:
            report, ctx = self._noma_report(state, slot)
        except SingularMatrixError:
            return rates
        for m, cluster in enumerate(ctx.members):
            for local, u in enumerate(cluster):
                rates[u] = report.effective_rate[m][local]
        return rates


@dataclass
class EpisodeResult:
    trace: list[tuple]
    episode_reward: float
    best_states: list[StateVector]
    best_rates: list[float]
    final_state: StateVector | None


@dataclass
class TrainingResult:
    episode_rewards: list[float]
    best_states: list[StateVector]
    best_rates: list[float]
    traces: list[tuple]


def run_episode(
    env,
    agent,
    hp: AgentHyperparams,
    rng: SeededRng,
    n_slots: int | None = None,
    episode_idx: int = 0,
) -> EpisodeResult:
    """One pass over the slot contexts.

    The control state carries over from slot to slot; each slot gets
    hp.steps_per_slot environment steps with difference rewards.  Tracks
    the best state seen per slot across every evaluation made.  The episode
    reward totals the per-step difference rewards, so it telescopes to the
    final achieved sum rate relative to the flat starting state, and its
    per-episode trace is the learning curve.
    """
    n_slots = env.n_slots if n_slots is None else n_slots
    if n_slots == 0:
        return EpisodeResult(
            trace=[], episode_reward=0.0, best_states=[], best_rates=[],
            final_state=None,
        )
    eps = hp.epsilon_at(episode_idx)
    state = env.initial_state()
    trace: list[tuple] = []
    best_states: list[StateVector] = []
    best_rates: list[float] = []
    episode_reward = 0.0
    step_global = 0
    for slot in range(n_slots):
        current = env.evaluate(state, slot)
        best_state, best_rate = state.copy(), current
        for _ in range(hp.steps_per_slot):
            action = agent.act(state, rng, eps)
            nxt = agent.actions.apply(state, action)
            nxt_value = env.evaluate(nxt, slot)
            step_reward = nxt_value - current
            episode_reward += step_reward
            loss = agent.observe(
                Experience(
                    state=state, action=action, reward=step_reward, next_state=nxt
                ),
                rng,
            )
            trace.append(
                (
                    episode_idx,
                    step_global,
                    slot,
                    eps,
                    action,
                    step_reward,
                    float("nan") if loss is None else loss,
                    nxt_value,
                )
            )
            state, current = nxt, nxt_value
            if current > best_rate:
                best_state, best_rate = state.copy(), current
            step_global += 1
        best_states.append(best_state)
        best_rates.append(best_rate)
    return EpisodeResult(
        trace=trace,
        episode_reward=episode_reward,
        best_states=best_states,
        best_rates=best_rates,
        final_state=state,
    )


def train_agent(
    env,
    agent,
    hp: AgentHyperparams,
    n_episodes: int,
    rng: SeededRng,
    keep_traces: bool = False,
) -> TrainingResult:
    """Repeated episodes with per-episode derived streams; keeps the best
    state per slot seen across the whole run."""
    episode_rewards: list[float] = []
    best_states: list[StateVector] = []
    best_rates: list[float] = []
    traces: list[tuple] = []
    for episode in range(n_episodes):
        result = run_episode(
            env, agent, hp, rng.substream(f"episode{episode}"), episode_idx=episode
        )
        episode_rewards.append(result.episode_reward)
        if not best_states:
            best_states = [s.copy() for s in result.best_states]
            best_rates = list(result.best_rates)
        else:
            for slot in range(len(best_states)):
                if result.best_rates[slot] > best_rates[slot]:
                    best_states[slot] = result.best_states[slot].copy()
                    best_rates[slot] = result.best_rates[slot]
        if keep_traces:
            traces.extend(result.trace)
    return TrainingResult(
        episode_rewards=episode_rewards,
        best_states=best_states,
        best_rates=best_rates,
        traces=traces,
    )


def training_trace_to_csv(rows: list[tuple], path: str) -> None:
    """(episode, step, slot, epsilon, action_id, reward, loss, sum_rate)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "episode", "step", "slot", "epsilon",
                "action_id", "reward", "loss", "sum_rate",
            ]
        )
        for episode, step, slot, eps, action, r, loss, rate_val in rows:
            writer.writerow(
                [
                    episode, step, slot, f"{eps:.6g}", action,
                    f"{r:.6g}", f"{loss:.6g}", f"{rate_val:.6g}",
                ]
            )
