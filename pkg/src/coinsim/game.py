"""Multiuser partial-offloading game: efficiency-based initialization, decentralized
best response under controller arbitration, the ordinal potential function, NE
certification, and the finite-iteration convergence bound.

A user's strategy is a single uplink choice: 0 (every subtask local) or a
channel m in 1..M carrying all of its remote-eligible subtasks. A subtask is
remote-eligible when its rate-independent gain over local execution is
positive and a cache-feasible destination exists; ineligible subtasks stay
local under every strategy, which is what makes offloading partial. With the
strategy space at user level, every unilateral improvement strictly decreases
the potential and best-response dynamics terminate at a Nash equilibrium.

Decision costs here exclude consensus latency (the interference-threshold
derivation has no BC terms); slot metrics charge it separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemParams, SubtaskSpec
from .costs import EIN, FIN, LOCAL, local_cost
from .radio import (NEVER_OFFLOAD, ChannelState, rate_for_interference,
                    rate_threshold, rx_power)


@dataclass
class DecisionProfile:
    """Per-user, per-subtask offloading cells: mode 0 = local, else channel index."""

    modes: np.ndarray   # (K, V) int
    dests: np.ndarray   # (K, V) int, FIN/EIN code minus 1; meaningful when mode >= 1
    active: np.ndarray  # (K,) bool, user has a request this slot

    def user_channel(self, k: int) -> int:
        remote = self.modes[k][self.modes[k] > 0]
        return int(remote[0]) if remote.size else 0

    def channels(self) -> np.ndarray:
        return np.array([self.user_channel(k) for k in range(self.modes.shape[0])])


@dataclass
class GameInstance:
    params: SystemParams
    rho_eta: np.ndarray          # (K,) rho_k * eta_k
    user_subtasks: list          # per user: list of SubtaskSpec ([] = no request)
    fin_backlog: float = 0.0     # queue snapshot, s
    ein_backlog: float = 0.0


def make_instance(params: SystemParams, state: ChannelState, user_subtasks,
                  fin_backlog: float = 0.0, ein_backlog: float = 0.0) -> GameInstance:
    return GameInstance(params, rx_power(state, params), user_subtasks,
                        fin_backlog, ein_backlog)


@dataclass
class UserStats:
    """Rate-independent pieces of one user's cost, fixed for the slot's game."""

    index: int
    rho_eta: float
    local_total: float           # cost of playing 0
    off_base: float              # local cost of the ineligible subtasks
    remote_const: float          # rate-independent remote cost of eligible subtasks
    phi_sum: float               # coefficient of 1/omega in the remote cost
    lam: float                   # aggregate interference threshold (-inf: never offload)
    eligible: list = field(default_factory=list)        # subtask indices
    dests: dict = field(default_factory=dict)           # subtask index -> 0 FIN / 1 EIN
    remote_delay_terms: list = field(default_factory=list)  # (fixed_s, tx_bits) per eligible
    local_delays: list = field(default_factory=list)

    def remote_cost(self, omega: float) -> float:
        return self.off_base + self.remote_const + self.phi_sum / omega


def init_case(subtask: SubtaskSpec, params: SystemParams) -> int:
    """Algorithm-1 initialization case split on computational efficiency."""
    base = subtask.load_cycles * params.cpu_local_hz
    l_local = base / (params.tx_power_w * subtask.software_bits)
    l_fin = base / (params.cpu_fin_hz * params.cache_fin_bits)
    l_ein = base / (params.cpu_ein_hz * params.cache_ein_bits)
    if l_local >= l_fin and l_local >= l_ein:   # ties resolve to local
        return LOCAL
    if l_fin > l_ein:
        return FIN
    return EIN


def init_profile(user_subtasks, params: SystemParams) -> DecisionProfile:
    """Warm-start decisions from the efficiency case split; remote users get
    round-robin channels in index order."""
    num_users = len(user_subtasks)
    modes = np.zeros((num_users, params.num_subtasks), dtype=int)
    dests = np.zeros((num_users, params.num_subtasks), dtype=int)
    active = np.array([len(s) > 0 for s in user_subtasks])
    remote_rank = 0
    for k, subtasks in enumerate(user_subtasks):
        cases = [init_case(st, params) for st in subtasks]
        if any(c != LOCAL for c in cases):
            channel = 1 + remote_rank % params.num_channels
            remote_rank += 1
            for v, c in enumerate(cases):
                if c != LOCAL:
                    modes[k, v] = channel
                    dests[k, v] = c - 1
    return DecisionProfile(modes=modes, dests=dests, active=active)


def prepare_user(k: int, inst: GameInstance) -> UserStats | None:
    """Fold one user's subtasks into the affine-in-1/omega cost pieces."""
    subtasks = inst.user_subtasks[k]
    if not subtasks:
        return None
    p = inst.params
    dT, dE, rho = p.delay_weight, p.energy_weight, p.tx_power_w
    queues = p.queues_enabled
    phi_per_bit = (2 * dT if queues else dT) + dE * rho

    stats = UserStats(index=k, rho_eta=float(inst.rho_eta[k]), local_total=0.0,
                      off_base=0.0, remote_const=0.0, phi_sum=0.0, lam=NEVER_OFFLOAD)
    gain_sum = 0.0
    used_cache = {0: 0.0, 1: 0.0}
    cache_cap = {0: p.cache_fin_bits, 1: p.cache_ein_bits}
    backlog = {0: inst.fin_backlog, 1: inst.ein_backlog}
    cpu = {0: p.cpu_fin_hz, 1: p.cpu_ein_hz}

    for v, st in enumerate(subtasks):
        lc = local_cost(st, p)
        stats.local_total += lc.cost
        stats.local_delays.append(st.load_cycles / p.cpu_local_hz)
        # rate-independent remote cost per destination (queue doubles the
        # execution term and adds the snapshot backlog; see costs.queue_delay)
        options = []
        for dest in (0, 1):
            if used_cache[dest] + st.software_bits > cache_cap[dest]:
                continue
            exe = st.load_cycles / cpu[dest]
            const = dT * (2 * exe + backlog[dest]) if queues else dT * exe
            options.append((const, dest))
        chosen = min(options) if options else None  # FIN wins cost ties
        gain = lc.cost - chosen[0] if chosen else 0.0
        if chosen is None or gain <= 0.0:
            stats.off_base += lc.cost
            continue
        const, dest = chosen
        used_cache[dest] += st.software_bits
        exe = st.load_cycles / cpu[dest]
        fixed_delay = (2 * exe + backlog[dest]) if queues else exe
        tx_bits = (2 * st.data_bits) if queues else st.data_bits
        if fixed_delay > p.subtask_deadline_s:
            # remote can never meet the deadline for this subtask at any rate
            stats.off_base += lc.cost
            continue
        stats.eligible.append(v)
        stats.dests[v] = dest
        stats.remote_const += const
        stats.phi_sum += st.data_bits * phi_per_bit
        stats.remote_delay_terms.append((fixed_delay, tx_bits))
        gain_sum += gain

    if stats.eligible:
        stats.lam = rate_threshold(stats.phi_sum, gain_sum, stats.rho_eta, p)
    return stats


def _deadline_ok(stats: UserStats, omega: float, params: SystemParams) -> bool:
    mu = params.subtask_deadline_s
    return all(fixed + tx / omega <= mu + 1e-12
               for fixed, tx in stats.remote_delay_terms)


def user_cost(stats: UserStats, mode: int, occupancy: np.ndarray,
              params: SystemParams) -> float:
    """Cost of one user's strategy given the co-channel occupancy of the others."""
    if mode == 0:
        return stats.local_total
    omega = rate_for_interference(stats.rho_eta, occupancy[mode], params)
    return stats.remote_cost(omega)


def best_response(stats: UserStats, occupancy: np.ndarray, current: int,
                  params: SystemParams):
    """Argmin over {local, channels} holding everyone else fixed.

    occupancy[m] sums rho*eta over users currently on channel m (including the
    deviator, whose own term is removed here). Ties keep local first, then the
    lowest channel index.
    """
    best_cost, best_mode = stats.local_total, 0
    if stats.eligible:
        for m in range(1, params.num_channels + 1):
            seen = occupancy[m] - (stats.rho_eta if current == m else 0.0)
            omega = rate_for_interference(stats.rho_eta, seen, params)
            if omega <= 0.0 or not _deadline_ok(stats, omega, params):
                continue
            cost = stats.remote_cost(omega)
            if cost < best_cost:
                best_cost, best_mode = cost, m
    return best_cost, best_mode


def potential(assignment: np.ndarray, rho_eta: np.ndarray,
              lambdas: np.ndarray) -> float:
    """Ordinal potential: pairwise co-channel interference products plus the
    threshold-weighted local terms. Users with a -inf (never-offload) threshold
    never deviate, so their constant local term is excluded.

    assignment: per-user channel (0 local, -1 not playing).
    """
    assignment = np.asarray(assignment)
    total = 0.0
    for m in np.unique(assignment[assignment > 0]):
        power = rho_eta[assignment == m]
        s = power.sum()
        total += 0.5 * (s * s - (power * power).sum())
    local = (assignment == 0) & np.isfinite(lambdas)
    total += float((rho_eta[local] * lambdas[local]).sum())
    return total


def convergence_bound(rho_eta: np.ndarray, lambdas: np.ndarray, pi: float) -> float:
    """Finite-improvement iteration bound
    (K^2 Omega_max^2 / 2 + K (Omega_max lam_max - Omega_min lam_min)) / (pi Omega_min).
    """
    if pi <= 0:
        raise ValueError(f"pi must be positive, got {pi}")
    rho_eta = np.asarray(rho_eta, dtype=float)
    k = rho_eta.size
    omega_max, omega_min = float(rho_eta.max()), float(rho_eta.min())
    if omega_min <= 0:
        raise ValueError("all rho*eta must be positive")
    finite = np.isfinite(np.asarray(lambdas, dtype=float))
    if finite.any():
        lam_max = float(np.max(np.asarray(lambdas)[finite]))
        lam_min = float(np.min(np.asarray(lambdas)[finite]))
    else:
        lam_max = lam_min = 0.0
    numer = 0.5 * k * k * omega_max ** 2 + k * (omega_max * lam_max - omega_min * lam_min)
    return numer / (pi * omega_min)


@dataclass
class GameOutcome:
    profile: DecisionProfile
    channels: np.ndarray
    iterations: int
    potential_trace: list       # potential before and after each accepted update
    moves: list                 # (iteration, potential, mover, cost_drop)
    is_ne: bool
    bound: float
    deadline_flags: np.ndarray  # per-user: chosen decision exceeds the deadline somewhere
    lambdas: np.ndarray
    rho_eta: np.ndarray


def _build_profile(inst: GameInstance, stats_list, channels) -> DecisionProfile:
    num_users = len(inst.user_subtasks)
    modes = np.zeros((num_users, inst.params.num_subtasks), dtype=int)
    dests = np.zeros((num_users, inst.params.num_subtasks), dtype=int)
    active = np.array([s is not None for s in stats_list])
    for k, stats in enumerate(stats_list):
        if stats is None or channels[k] == 0:
            continue
        for v in stats.eligible:
            modes[k, v] = channels[k]
            dests[k, v] = stats.dests[v]
    return DecisionProfile(modes=modes, dests=dests, active=active)


def run_to_ne(inst: GameInstance, initial: DecisionProfile | None = None,
              max_iters: int | None = None) -> GameOutcome:
    """Best-response dynamics with one controller-granted update per iteration
    (the requester with the largest cost decrease wins; ties to the lowest index).

    Stops when no user can improve; the returned bound uses pi = the smallest
    observed potential decrease, as the harness estimates it.
    """
    p = inst.params
    num_users = len(inst.user_subtasks)
    stats_list = [prepare_user(k, inst) for k in range(num_users)]
    if max_iters is None:
        max_iters = 1000 * max(num_users, 1)

    if initial is None:
        initial = init_profile(inst.user_subtasks, p)
    channels = initial.channels().copy()
    for k, stats in enumerate(stats_list):
        if stats is None or not stats.eligible:
            channels[k] = 0   # nothing to offload: normalize to local

    lambdas = np.array([s.lam if s is not None else NEVER_OFFLOAD for s in stats_list])
    rho_eta = inst.rho_eta.astype(float)
    occupancy = np.zeros(p.num_channels + 1)
    for k in range(num_users):
        if channels[k] > 0:
            occupancy[channels[k]] += rho_eta[k]

    def assign_vector():
        vec = channels.copy()
        vec[[s is None for s in stats_list]] = -1
        return vec

    trace = [potential(assign_vector(), rho_eta, lambdas)]
    moves = []
    is_ne = False
    active = [k for k in range(num_users) if stats_list[k] is not None]

    while len(moves) < max_iters:
        best_req = None
        for k in active:
            stats = stats_list[k]
            cur_mode = channels[k]
            if cur_mode > 0:
                seen = occupancy[cur_mode] - rho_eta[k]
                omega = rate_for_interference(rho_eta[k], seen, p)
                cur_cost = (stats.remote_cost(omega)
                            if _deadline_ok(stats, omega, p) else float("inf"))
            else:
                cur_cost = stats.local_total
            br_cost, br_mode = best_response(stats, occupancy, cur_mode, p)
            drop = cur_cost - br_cost
            if br_mode != cur_mode and drop > 0.0:
                if best_req is None or drop > best_req[0]:
                    best_req = (drop, k, br_mode)
        if best_req is None:
            is_ne = True
            break
        drop, k, new_mode = best_req
        if channels[k] > 0:
            occupancy[channels[k]] -= rho_eta[k]
        channels[k] = new_mode
        if new_mode > 0:
            occupancy[new_mode] += rho_eta[k]
        phi = potential(assign_vector(), rho_eta, lambdas)
        trace.append(phi)
        moves.append((len(moves) + 1, phi, k, drop))

    decreases = [trace[i] - trace[i + 1] for i in range(len(trace) - 1)
                 if trace[i] - trace[i + 1] > 0]
    pi = min(decreases) if decreases else 1.0
    rho_active = rho_eta[[k for k in active]] if active else np.array([1.0])
    lam_active = lambdas[[k for k in active]] if active else np.array([0.0])
    bound = convergence_bound(rho_active, lam_active, pi) if active else 0.0

    profile = _build_profile(inst, stats_list, channels)
    flags = np.zeros(num_users, dtype=bool)
    for k in active:
        stats = stats_list[k]
        if channels[k] == 0:
            flags[k] = any(d > p.subtask_deadline_s for d in stats.local_delays)
        else:
            seen = occupancy[channels[k]] - rho_eta[k]
            omega = rate_for_interference(rho_eta[k], seen, p)
            remote_bad = not _deadline_ok(stats, omega, p)
            local_part = [stats.local_delays[v] for v in range(len(stats.local_delays))
                          if v not in stats.eligible]
            flags[k] = remote_bad or any(d > p.subtask_deadline_s for d in local_part)

    return GameOutcome(profile=profile, channels=channels, iterations=len(moves),
                       potential_trace=trace, moves=moves, is_ne=is_ne, bound=bound,
                       deadline_flags=flags, lambdas=lambdas, rho_eta=rho_eta)
