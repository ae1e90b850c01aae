"""Redundancy-factor learning agent: state encoding, reward shaping, replay
memory, DDQN training, knapsack action optimization and inference-time policy
updates.

The network's predicted value is linear in the action's spend weights
u*(beta+r)*V, so the exact max over the combinatorial action set reduces to
the bounded knapsack in knapsack.py rather than a sampled approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import knapsack, qnet
from .chain import RedundancyProfile, bc_spend
from .config import (RngStream, SystemParams, rng_state_from_jsonable,
                     rng_state_to_jsonable)


@dataclass
class EncodedState:
    per_user: np.ndarray    # (K,) weighted-sum summary per user
    x: np.ndarray           # (K*F,) request indicator, the network input


@dataclass
class BrfAction:
    levels: np.ndarray      # (F*V,) per-subtask redundancy level
    beta: np.ndarray        # derived: 1 iff level < r_max
    infeasible: bool = False

    @classmethod
    def from_levels(cls, levels, r_max: int, infeasible: bool = False) -> "BrfAction":
        levels = np.asarray(levels, dtype=int)
        return cls(levels=levels, beta=(levels < r_max).astype(int),
                   infeasible=infeasible)

    def profile(self, r_max: int) -> RedundancyProfile:
        return RedundancyProfile.from_levels(self.levels, r_max)


@dataclass
class Transition:
    x: np.ndarray               # state indicator
    action_weights: np.ndarray  # spend weights of the taken action
    reward: float               # standardized
    next_x: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError(f"non-finite reward {self.reward!r}")


class ReplayMemory:
    """Ring buffer with strictly FIFO eviction."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def push(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, rng: RngStream) -> list:
        idx = rng.gen.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self):
        return len(self._items)


class RunningNorm:
    """Welford running mean/variance used to standardize rewards."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def std(self) -> float:
        var = self.m2 / self.count if self.count > 1 else 0.0
        return float(np.sqrt(var + 1e-8))

    def standardize(self, value: float) -> float:
        if self.count < 2:
            return 0.0
        return (value - self.mean) / self.std()

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean, "m2": self.m2}

    def restore(self, state: dict) -> None:
        self.count, self.mean, self.m2 = state["count"], state["mean"], state["m2"]


def encode_state(requests: np.ndarray, tasks, params: SystemParams,
                 chi=(1, 1, 1, 1)) -> EncodedState:
    """Weighted-sum state of each user's requested subtasks plus the request
    indicator matrix (K x F, flattened) the network consumes.

    The four min-max-normalized components: user CPU, subtask <I,V,P>,
    remote CPU, and cache sizes; chi switches each on or off.
    """
    k_users, f_tasks = params.num_users, params.num_tasks
    cpu_max = max(params.cpu_local_hz, params.cpu_fin_hz, params.cpu_ein_hz)
    cache_max = max(params.cache_fin_bits, params.cache_ein_bits)
    s0 = params.cpu_local_hz / cpu_max
    s2 = (params.cpu_fin_hz + params.cpu_ein_hz) / (2 * cpu_max)
    s3 = (params.cache_fin_bits + params.cache_ein_bits) / (2 * cache_max)
    i_hi = params.input_range_mb[1]
    v_hi = params.software_range_mb[1]
    p_hi = params.load_range_gc[1]

    per_task = np.zeros(f_tasks)
    for f, subtasks in enumerate(tasks):
        total = 0.0
        for st in subtasks:
            s1 = (st.input_bits / (i_hi * 8e6) + st.software_bits / (v_hi * 8e6)
                  + st.load_cycles / (p_hi * 1e9)) / 3.0
            total += chi[0] * s0 + chi[1] * s1 + chi[2] * s2 + chi[3] * s3
        per_task[f] = total

    per_user = np.zeros(k_users)
    x = np.zeros((k_users, f_tasks))
    for k, req in enumerate(requests):
        if req > 0:
            per_user[k] = per_task[req - 1]
            x[k, req - 1] = 1.0
    return EncodedState(per_user=per_user, x=x.reshape(-1))


def slot_reward(cost_full_redundancy: float, cost_actual: float,
                incentive_total: float, params: SystemParams) -> float:
    """Raw reward: weighted cost saving against the full-redundancy reference
    plus the weighted mining incentive."""
    return (params.reward_w1 * (cost_full_redundancy - cost_actual)
            + params.reward_w2 * incentive_total)


def action_spend_weights(levels, volumes_mb, params: SystemParams) -> np.ndarray:
    levels = np.asarray(levels, dtype=int)
    beta = (levels < params.r_max).astype(float)
    return params.price_per_mb * (levels + beta) * np.asarray(volumes_mb, dtype=float)


def optimal_action(theta, volumes_mb, u, budget, r_min, r_max,
                   quantum: float = 1.0, objective: str = "max") -> BrfAction:
    """Exact argmax of the spend-weighted value over feasible redundancy profiles."""
    levels, infeasible = knapsack.solve(theta, volumes_mb, u, budget, r_min, r_max,
                                        quantum=quantum, objective=objective)
    return BrfAction.from_levels(levels, r_max, infeasible)


def sample_feasible_action(volumes_mb, params: SystemParams, rng: RngStream,
                           max_tries: int = 5000) -> BrfAction:
    """Uniform draw over the feasible action set by rejection against the
    budget (the replication cap holds by construction). Falls back to all-r_min
    with a flag when no draw fits."""
    volumes_mb = np.asarray(volumes_mb, dtype=float)
    n = volumes_mb.size
    for _ in range(max_tries):
        levels = rng.gen.integers(params.r_min, params.r_max + 1, size=n)
        spend = action_spend_weights(levels, volumes_mb, params).sum()
        if spend <= params.bc_budget + 1e-9:
            return BrfAction.from_levels(levels, params.r_max)
    return BrfAction.from_levels(np.full(n, params.r_min), params.r_max,
                                 infeasible=True)


def td_target(reward: float, next_x, target_net, volumes_mb,
              params: SystemParams, terminal: bool = False) -> float:
    """reward + gamma * max_a Q_target(next state, a); the max is the knapsack
    optimum on the target net's theta (Q is linear in the action weights)."""
    if terminal:
        return float(reward)
    theta = qnet.forward(target_net, next_x, dropout_active=False)
    best = knapsack.max_values(theta[None, :], volumes_mb, params.price_per_mb,
                               params.bc_budget, params.r_min, params.r_max)[0]
    return float(reward + params.rl.discount * best)


def infer_policy(x, net, volumes_mb, params: SystemParams,
                 prev_beta: np.ndarray | None = None):
    """Inference step: forward (dropout off) -> theta -> knapsack action; the
    redundancy update vector is the change of the derived beta flags."""
    theta = qnet.forward(net, x, dropout_active=False)
    action = optimal_action(theta, volumes_mb, params.price_per_mb,
                            params.bc_budget, params.r_min, params.r_max)
    if prev_beta is None:
        prev_beta = action.beta
    update = action.beta - np.asarray(prev_beta, dtype=int)
    return action, update


class RedundancyAgent:
    """DDQN controller choosing per-subtask redundancy levels each slot."""

    def __init__(self, params: SystemParams, tasks, train_slots: int,
                 rng: RngStream | None = None):
        self.params = params
        self.subtasks = [st for task in tasks for st in task]
        self.volumes_mb = np.array([st.software_mb for st in self.subtasks])
        rng = rng or params.rng("agent")
        # constant normalizer on the aggregation weights: scaling Q by 1/c
        # changes neither the knapsack argmax nor any action ordering, but
        # keeps gradients conditioned at the configured learning rate
        self.weight_scale = float(params.price_per_mb * params.r_max
                                  * np.mean(self.volumes_mb))
        sizes = (params.num_users * params.num_tasks, *params.rl.hidden_sizes,
                 len(self.subtasks))
        self.net = qnet.init_network(sizes, rng.child("init"),
                                     dropout_p=params.rl.input_dropout)
        self.target = qnet.sync_target(self.net)
        self.replay = ReplayMemory(params.rl.replay_capacity)
        self.norm = RunningNorm()
        self.explore_rng = rng.child("explore")
        self.dropout_rng = rng.child("dropout")
        self.sample_rng = rng.child("replay")
        self.train_slots = max(int(train_slots), 1)
        self.slot = 0
        self.frozen = False
        self.pending = None     # (x, action weights, standardized reward)
        self.last = None
        self.losses: list = []
        self.sync_slots: list = []

    # --- policy ---------------------------------------------------------

    def epsilon(self) -> float:
        rl = self.params.rl
        horizon = max(1, int(rl.eps_decay_frac * self.train_slots))
        frac = min(self.slot / horizon, 1.0)
        return rl.eps_start + (rl.eps_end - rl.eps_start) * frac

    def greedy_action(self, state: EncodedState) -> BrfAction:
        theta = qnet.forward(self.net, state.x, dropout_active=False)
        return optimal_action(theta, self.volumes_mb, self.params.price_per_mb,
                              self.params.bc_budget, self.params.r_min,
                              self.params.r_max)

    def begin_slot(self, state: EncodedState) -> BrfAction:
        """Complete the previous transition, train, then pick this slot's action."""
        if self.frozen:
            return self.greedy_action(state)
        if self.pending is not None:
            x_prev, w_prev, r_prev = self.pending
            self.replay.push(Transition(x_prev, w_prev, r_prev, state.x.copy()))
            self.pending = None
            if len(self.replay) >= self.params.rl.batch_size:
                self._train_minibatch()
        if self.explore_rng.gen.random() < self.epsilon():
            action = sample_feasible_action(self.volumes_mb, self.params,
                                            self.explore_rng)
        else:
            action = self.greedy_action(state)
        weights = (action_spend_weights(action.levels, self.volumes_mb, self.params)
                   / self.weight_scale)
        self.last = (state.x.copy(), weights)
        return action

    def end_slot(self, raw_reward: float) -> None:
        if self.frozen:
            return
        self.norm.update(raw_reward)
        x, weights = self.last
        self.pending = (x, weights, self.norm.standardize(raw_reward))
        self.slot += 1
        if self.slot % self.params.rl.target_sync == 0:
            self.target = qnet.sync_target(self.net)
            self.sync_slots.append(self.slot)

    # --- learning -------------------------------------------------------

    def _train_minibatch(self) -> float:
        rl = self.params.rl
        batch = self.replay.sample(rl.batch_size, self.sample_rng)
        x = np.stack([t.x for t in batch])
        weights = np.stack([t.action_weights for t in batch])
        rewards = np.array([t.reward for t in batch])
        next_x = np.stack([t.next_x for t in batch])
        thetas_next = qnet.forward(self.target, next_x, dropout_active=False)
        best_next = knapsack.max_values(thetas_next, self.volumes_mb,
                                        self.params.price_per_mb,
                                        self.params.bc_budget,
                                        self.params.r_min, self.params.r_max)
        targets = rewards + rl.discount * best_next / self.weight_scale
        loss = qnet.train_step(self.net, x, weights, targets, rl.learning_rate,
                               dropout_active=True, rng=self.dropout_rng)
        self.losses.append(loss)
        return loss

    # --- persistence ----------------------------------------------------

    def save(self, path) -> None:
        extra = {
            "slot": self.slot,
            "epsilon": self.epsilon(),
            "train_slots": self.train_slots,
            "normalizer": self.norm.state(),
            "target_layers": [{"weights": w.tolist(), "bias": b.tolist()}
                              for w, b in zip(self.target.weights, self.target.biases)],
            "rng": {
                "explore": rng_state_to_jsonable(self.explore_rng.state()),
                "dropout": rng_state_to_jsonable(self.dropout_rng.state()),
                "replay": rng_state_to_jsonable(self.sample_rng.state()),
            },
        }
        qnet.save_checkpoint(self.net, path, extra)

    def load(self, path) -> None:
        net, extra = qnet.load_checkpoint(path)
        if net.sizes != self.net.sizes:
            raise ValueError(f"checkpoint shape {net.sizes} != agent {self.net.sizes}")
        self.net = net
        self.target = self.net.copy()
        layers = extra.get("target_layers")
        if layers:
            self.target.weights = [np.array(l["weights"], dtype=float) for l in layers]
            self.target.biases = [np.array(l["bias"], dtype=float) for l in layers]
        self.slot = extra.get("slot", 0)
        self.train_slots = extra.get("train_slots", self.train_slots)
        if "normalizer" in extra:
            self.norm.restore(extra["normalizer"])
        for name, stream in (("explore", self.explore_rng),
                             ("dropout", self.dropout_rng),
                             ("replay", self.sample_rng)):
            state = extra.get("rng", {}).get(name)
            if state:
                stream.set_state(rng_state_from_jsonable(state))


def train_epoch(env, agent: RedundancyAgent, num_slots: int) -> dict:
    """Run the training loop for num_slots slots against a slot environment
    (begin_slot/finish_slot protocol); returns per-slot rewards and losses."""
    rewards = []
    for _ in range(num_slots):
        state = env.begin_slot()
        action = agent.begin_slot(state)
        result = env.finish_slot(action)
        agent.end_slot(result.reward_raw)
        rewards.append(result.reward_raw)
    return {"rewards": rewards, "losses": list(agent.losses)}
