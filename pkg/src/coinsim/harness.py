"""Slot-loop orchestration: the environment, the four baselines, metric
aggregation, CSV emission and experiment/sweep drivers.

All randomness flows through labeled substreams. The task set and topology are
phase-independent; request, fading and policy draws are labeled per phase, so
every policy evaluated under the same seed sees identical realizations
(paired comparison).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .agent import (BrfAction, EncodedState, RedundancyAgent, encode_state,
                    sample_feasible_action, slot_reward)
from .chain import bc_spend, mining_incentive
from .config import (SystemParams, sample_tasks, step_requests,
                     uniform_transition)
from .costs import (EIN, FIN, LOCAL, QueueState, ein_cost, fin_cost,
                    local_cost)
from .game import DecisionProfile, make_instance, run_to_ne
from .radio import (distances_to_center, draw_channel_state, draw_positions,
                    rate_for_interference, rx_power)

POLICIES = ("proposed", "opg", "opg_rand", "mec", "random")

CSV_COLUMNS = ("episode", "slot", "policy", "avg_cost", "avg_latency",
               "avg_energy", "reward", "bc_spend", "incentive",
               "deadline_violations", "frac_local", "frac_fin", "frac_ein")


@dataclass
class SlotResult:
    avg_cost: float
    avg_latency: float
    avg_energy: float
    reward_raw: float
    bc_spend: float
    incentive: float
    deadline_violations: int
    frac_local: float
    frac_fin: float
    frac_ein: float
    profile: DecisionProfile
    action: BrfAction


class Environment:
    """One simulated system shared by a single policy run.

    Slot protocol: begin_slot() steps requests and fading and returns the
    encoded state; finish_slot(action, pco) solves the offloading problem,
    prices the slot, updates the queues and returns the SlotResult.
    """

    def __init__(self, params: SystemParams, phase: str = "run",
                 preset: str | None = None):
        self.params = params
        root = params.rng(phase)
        self.tasks = sample_tasks(params, params.rng("tasks"), preset)
        self.flat_subtasks = [st for task in self.tasks for st in task]
        self.volumes_mb = np.array([st.software_mb for st in self.flat_subtasks])
        positions = draw_positions(params, params.rng("topology"))
        self.distances = distances_to_center(positions, params)
        self.request_stream = root.child("requests")
        self.fading_stream = root.child("fading")
        self.policy_stream = root.child("policy")
        if params.request_transition is not None:
            self.transition = np.asarray(params.request_transition, dtype=float)
        else:
            self.transition = uniform_transition(params.num_tasks)
        self.requests = np.zeros(params.num_users, dtype=int)  # start idle
        self.fin_queue = QueueState("fin")
        self.ein_queue = QueueState("ein")
        self.slot_index = 0
        self.state = None
        self.encoded: EncodedState | None = None

    # --- slot protocol ---------------------------------------------------

    def begin_slot(self) -> EncodedState:
        self.requests = step_requests(self.requests, self.transition,
                                      self.request_stream)
        self.state = draw_channel_state(self.distances, self.params,
                                        self.fading_stream)
        self.encoded = encode_state(self.requests, self.tasks, self.params)
        return self.encoded

    def user_subtasks(self):
        return [self.tasks[r - 1] if r > 0 else [] for r in self.requests]

    def finish_slot(self, action: BrfAction, pco: str = "game") -> SlotResult:
        p = self.params
        subtasks = self.user_subtasks()
        if pco == "game":
            inst = make_instance(p, self.state, subtasks,
                                 fin_backlog=self.fin_queue.backlog(),
                                 ein_backlog=self.ein_queue.backlog())
            profile = run_to_ne(inst).profile
        elif pco == "mec":
            profile = self._mec_profile(subtasks)
        elif pco == "random":
            profile = self._random_profile(subtasks)
        else:
            raise ValueError(f"unknown pco solver {pco!r}")
        result = self._score(profile, action, subtasks)
        self.fin_queue.drain(p.subtask_deadline_s)
        self.ein_queue.drain(p.subtask_deadline_s)
        self.slot_index += 1
        return result

    # --- baselines -------------------------------------------------------

    def _mec_profile(self, subtasks) -> DecisionProfile:
        """Single MEC server at the EIN's figures: offload when cheaper than
        local and within the cache gate; one-shot rule with round-robin
        channels (every active user is counted as a potential interferer)."""
        p = self.params
        modes = np.zeros((p.num_users, p.num_subtasks), dtype=int)
        dests = np.zeros((p.num_users, p.num_subtasks), dtype=int)
        active = np.array([len(s) > 0 for s in subtasks])
        channels = np.zeros(p.num_users, dtype=int)
        rank = 0
        for k in range(p.num_users):
            if active[k]:
                channels[k] = 1 + rank % p.num_channels
                rank += 1
        power = rx_power(self.state, p)
        cache_used = 0.0
        dT, dE = p.delay_weight, p.energy_weight
        for k in range(p.num_users):
            if not active[k]:
                continue
            seen = sum(power[n] for n in range(p.num_users)
                       if n != k and active[n] and channels[n] == channels[k])
            omega = rate_for_interference(power[k], seen, p)
            backlog = self.ein_queue.backlog() if p.queues_enabled else 0.0
            for v, st in enumerate(subtasks[k]):
                if cache_used + st.software_bits > p.cache_ein_bits:
                    continue  # cache gate rejects; local fallback
                exe = st.load_cycles / p.cpu_ein_hz
                tx = st.data_bits / omega
                if p.queues_enabled:
                    remote = dT * (2 * exe + backlog + 2 * tx) + dE * p.tx_power_w * tx
                else:
                    remote = dT * (exe + tx) + dE * p.tx_power_w * tx
                if remote < local_cost(st, p).cost:
                    modes[k, v] = channels[k]
                    dests[k, v] = EIN - 1
                    cache_used += st.software_bits
        return DecisionProfile(modes=modes, dests=dests, active=active)

    def _random_profile(self, subtasks) -> DecisionProfile:
        p = self.params
        modes = np.zeros((p.num_users, p.num_subtasks), dtype=int)
        dests = np.zeros((p.num_users, p.num_subtasks), dtype=int)
        active = np.array([len(s) > 0 for s in subtasks])
        rng = self.policy_stream
        for k in range(p.num_users):
            if not active[k]:
                continue
            channel = int(rng.gen.integers(1, p.num_channels + 1))
            for v in range(len(subtasks[k])):
                venue = int(rng.gen.integers(0, 3))
                if venue != LOCAL:
                    modes[k, v] = channel
                    dests[k, v] = venue - 1
        return DecisionProfile(modes=modes, dests=dests, active=active)

    # --- pricing ---------------------------------------------------------

    def _score(self, profile: DecisionProfile, action: BrfAction,
               subtasks) -> SlotResult:
        p = self.params
        assignment = profile.channels()
        assignment[~profile.active] = 0
        power = rx_power(self.state, p)
        rates = {}
        for k in range(p.num_users):
            if assignment[k] > 0:
                seen = sum(power[n] for n in range(p.num_users)
                           if n != k and assignment[n] == assignment[k])
                rates[k] = rate_for_interference(power[k], seen, p)

        cost_actual = cost_full = 0.0
        delays, energies = [], []
        incentive = 0.0
        violations = 0
        counts = {LOCAL: 0, FIN: 0, EIN: 0}
        active_users = 0
        for k in range(p.num_users):
            if not profile.active[k]:
                continue
            active_users += 1
            task_idx = self.requests[k] - 1
            for v, st in enumerate(subtasks[k]):
                mode = profile.modes[k, v]
                if mode == 0:
                    ec = local_cost(st, p)
                    cost_actual += ec.cost
                    cost_full += ec.cost
                    counts[LOCAL] += 1
                else:
                    flat = task_idx * p.num_subtasks + v
                    level = int(action.levels[flat])
                    dest = profile.dests[k, v]
                    queue = self.fin_queue if dest == 0 else self.ein_queue
                    fn = fin_cost if dest == 0 else ein_cost
                    cpu = p.cpu_fin_hz if dest == 0 else p.cpu_ein_hz
                    ec = fn(st, rates[k], level, queue, p)
                    ec_full = fn(st, rates[k], p.r_max, queue, p)
                    queue.push(st.load_cycles / cpu)
                    cost_actual += ec.cost
                    cost_full += ec_full.cost
                    incentive += mining_incentive(st, p.incentive_per_mb)
                    counts[FIN if dest == 0 else EIN] += 1
                delays.append(ec.delay)
                energies.append(ec.energy)
                if ec.delay > p.subtask_deadline_s:
                    violations += 1

        total_subtasks = sum(counts.values())
        if total_subtasks:
            frac = {k: v / total_subtasks for k, v in counts.items()}
        else:
            frac = {LOCAL: 1.0, FIN: 0.0, EIN: 0.0}
        spend = bc_spend(action.profile(p.r_max), self.flat_subtasks,
                         p.price_per_mb)
        reward = slot_reward(cost_full, cost_actual, incentive, p)
        return SlotResult(
            avg_cost=cost_actual / active_users if active_users else 0.0,
            avg_latency=float(np.mean(delays)) if delays else 0.0,
            avg_energy=float(np.mean(energies)) if energies else 0.0,
            reward_raw=reward,
            bc_spend=spend,
            incentive=incentive,
            deadline_violations=violations,
            frac_local=frac[LOCAL],
            frac_fin=frac[FIN],
            frac_ein=frac[EIN],
            profile=profile,
            action=action,
        )


def _pco_kind(policy: str) -> str:
    return {"proposed": "game", "opg": "game", "opg_rand": "game",
            "mec": "mec", "random": "random"}[policy]


def run_slot(env: Environment, policy: str, agent: RedundancyAgent | None = None,
             check=None) -> SlotResult:
    """One slot under the given policy: step requests, pick a redundancy
    action, solve the offloading problem, price and record."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    p = env.params
    state = env.begin_slot()
    n = len(env.flat_subtasks)
    if policy == "proposed":
        if agent is None:
            raise ValueError("the proposed policy needs an agent")
        action = agent.begin_slot(state)
    elif policy == "opg_rand":
        action = sample_feasible_action(env.volumes_mb, p, env.policy_stream)
    else:  # opg, mec, random: full replication
        action = BrfAction.from_levels(np.full(n, p.r_max), p.r_max)
    if check is not None:
        check(action)
    result = env.finish_slot(action, pco=_pco_kind(policy))
    if policy == "proposed" and not agent.frozen:
        agent.end_slot(result.reward_raw)
    return result


def _row(episode: int, slot: int, policy: str, res: SlotResult) -> dict:
    return {
        "episode": episode, "slot": slot, "policy": policy,
        "avg_cost": res.avg_cost, "avg_latency": res.avg_latency,
        "avg_energy": res.avg_energy, "reward": res.reward_raw,
        "bc_spend": res.bc_spend, "incentive": res.incentive,
        "deadline_violations": res.deadline_violations,
        "frac_local": res.frac_local, "frac_fin": res.frac_fin,
        "frac_ein": res.frac_ein,
    }


def run_experiment(params: SystemParams, policies, eval_episodes: int,
                   train_episodes: int = 0, *, preset: str | None = None,
                   checkpoint=None, slots_per_episode: int | None = None):
    """Train the proposed agent (if requested), then evaluate every policy on
    identically-seeded fresh environments. Returns ({"train": rows,
    "eval": rows}, agent)."""
    policies = list(policies)
    unknown = [pol for pol in policies if pol not in POLICIES]
    if unknown:
        raise ValueError(f"unknown policies {unknown}; expected {POLICIES}")
    spe = slots_per_episode or params.slots_per_episode
    rows = {"train": [], "eval": []}
    agent = None

    if "proposed" in policies:
        train_env = Environment(params, "train", preset)
        agent = RedundancyAgent(params, train_env.tasks,
                                train_slots=max(train_episodes, 1) * spe)
        if checkpoint is not None:
            agent.load(checkpoint)
        for ep in range(train_episodes):
            for s in range(spe):
                res = run_slot(train_env, "proposed", agent)
                rows["train"].append(_row(ep, s, "proposed", res))
        agent.frozen = True

    for policy in policies:
        env = Environment(params, "eval", preset)
        for ep in range(eval_episodes):
            for s in range(spe):
                res = run_slot(env, policy, agent)
                rows["eval"].append(_row(train_episodes + ep, s, policy, res))
    return rows, agent


def run_sweep(params: SystemParams, param_name: str, values, policies,
              eval_episodes: int, train_episodes: int = 0, **kwargs):
    """Grid over one parameter; each point runs a full experiment with a
    derived config. Returns (per-value eval rows, summary rows)."""
    if param_name not in ("r_max", "num_users", "num_subtasks"):
        raise ValueError(f"unsupported sweep parameter {param_name!r}")
    per_value = {}
    summary = []
    for value in values:
        swept = dataclasses.replace(params, **{param_name: int(value)}).validate()
        rows, _ = run_experiment(swept, policies, eval_episodes,
                                 train_episodes, **kwargs)
        per_value[value] = rows["eval"]
        for policy in policies:
            sel = [r for r in rows["eval"] if r["policy"] == policy]
            summary.append({
                "param": param_name, "value": value, "policy": policy,
                "mean_cost": float(np.mean([r["avg_cost"] for r in sel])),
                "mean_reward": float(np.mean([r["reward"] for r in sel])),
                "mean_latency": float(np.mean([r["avg_latency"] for r in sel])),
            })
    return per_value, summary


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))   # shortest exact round-trip form
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def emit_csv(rows, path, columns=CSV_COLUMNS) -> None:
    """Deterministic CSV: stable column order, repr floats (exact round-trip)."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path, columns=CSV_COLUMNS):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for name, cell in zip(header, cells):
            if name in ("episode", "slot", "deadline_violations", "value"):
                row[name] = int(cell)
            elif name in ("policy", "param"):
                row[name] = cell
            else:
                row[name] = float(cell)
        rows.append(row)
    return rows
