"""Built-in property suites behind the `selftest` subcommand, plus the random
instance generators and independent oracles the test suite shares.

Oracles here deliberately avoid the implementation paths they check: game
costs are re-evaluated through the cost-model functions instead of the game's
cached coefficients, and the knapsack is checked against full enumeration.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from . import knapsack, qnet
from .config import RngStream, SystemParams
from .costs import ein_cost, fin_cost, local_cost
from .game import (GameInstance, potential, prepare_user, run_to_ne)
from .radio import ChannelState, rate_for_interference

# --- offloading game instances ------------------------------------------


def small_game_params(users: int, channels: int, subtasks: int,
                      seed: int = 0) -> SystemParams:
    """Queue- and BC-disabled configuration matching the regime of the
    ordinal-potential analysis; the deadline is slack so no strategy is
    screened out."""
    return SystemParams(
        num_users=users, num_channels=channels, num_subtasks=subtasks,
        num_tasks=1, queues_enabled=False, bc_enabled=False,
        subtask_deadline_s=1e9, seed=seed,
    ).validate()


def random_game_instance(rng: RngStream, max_users=6, max_channels=3,
                         max_subtasks=3) -> GameInstance:
    g = rng.gen
    users = int(g.integers(2, max_users + 1))
    channels = int(g.integers(1, max_channels + 1))
    subtasks = int(g.integers(1, max_subtasks + 1))
    params = small_game_params(users, channels, subtasks)
    distances = g.uniform(20.0, 150.0, size=users)
    fading = g.exponential(1.0, size=users)
    gains = fading * distances ** (-params.path_loss_exp)
    state = ChannelState(distances=distances, fading=fading, gains=gains)
    user_subtasks = []
    for _ in range(users):
        subs = []
        for _ in range(subtasks):
            subs.append(_random_subtask(g))
        user_subtasks.append(subs)
    return GameInstance(params, params.tx_power_w * gains, user_subtasks)


def _random_subtask(g):
    from .config import SubtaskSpec
    return SubtaskSpec(input_bits=g.uniform(1, 10) * 8e6,
                       software_bits=g.uniform(1, 10) * 8e6,
                       load_cycles=g.uniform(1, 10) * 1e9)


def oracle_user_cost(inst: GameInstance, stats, mode: int,
                     channels: np.ndarray) -> float:
    """User cost re-evaluated through the cost-model functions (independent of
    the game's affine decomposition). Eligibility and destinations come from
    the shared strategy-space definition."""
    p = inst.params
    subtasks = inst.user_subtasks[stats.index]
    if mode == 0:
        return sum(local_cost(st, p).cost for st in subtasks)
    seen = sum(float(inst.rho_eta[n]) for n in range(len(channels))
               if n != stats.index and channels[n] == mode)
    omega = rate_for_interference(float(inst.rho_eta[stats.index]), seen, p)
    total = 0.0
    for v, st in enumerate(subtasks):
        if v in stats.eligible:
            fn = fin_cost if stats.dests[v] == 0 else ein_cost
            total += fn(st, omega, 0, None, p, include_bc=False).cost
        else:
            total += local_cost(st, p).cost
    return total


def oracle_is_ne(inst: GameInstance, channels: np.ndarray,
                 rel_tol: float = 1e-9) -> bool:
    """Exhaustive unilateral-deviation check over the full strategy space."""
    stats_list = [prepare_user(k, inst) for k in range(len(inst.user_subtasks))]
    for k, stats in enumerate(stats_list):
        if stats is None:
            continue
        current = oracle_user_cost(inst, stats, int(channels[k]), channels)
        modes = [0] + (list(range(1, inst.params.num_channels + 1))
                       if stats.eligible else [])
        for mode in modes:
            if mode == channels[k]:
                continue
            cost = oracle_user_cost(inst, stats, mode, channels)
            if cost < current - rel_tol * max(abs(current), 1.0):
                return False
    return True


def random_assignment(inst: GameInstance, rng: RngStream) -> np.ndarray:
    g = rng.gen
    stats_list = [prepare_user(k, inst) for k in range(len(inst.user_subtasks))]
    channels = np.zeros(len(stats_list), dtype=int)
    for k, stats in enumerate(stats_list):
        if stats is not None and stats.eligible:
            channels[k] = int(g.integers(0, inst.params.num_channels + 1))
    return channels, stats_list


def sample_sign_checks(inst: GameInstance, rng: RngStream, count: int):
    """Random unilateral deviations; yields (case, d_potential, d_cost)."""
    g = rng.gen
    channels, stats_list = random_assignment(inst, rng)
    lambdas = np.array([s.lam if s is not None else -np.inf for s in stats_list])
    rho_eta = inst.rho_eta.astype(float)
    movable = [k for k, s in enumerate(stats_list) if s is not None and s.eligible]
    out = []
    if not movable:
        return out
    for _ in range(count):
        k = int(g.choice(movable))
        old = int(channels[k])
        new = old
        while new == old:
            new = int(g.integers(0, inst.params.num_channels + 1))
        before = potential(channels, rho_eta, lambdas)
        cost_before = oracle_user_cost(inst, stats_list[k], old, channels)
        channels[k] = new
        after = potential(channels, rho_eta, lambdas)
        cost_after = oracle_user_cost(inst, stats_list[k], new, channels)
        channels[k] = old
        if old > 0 and new > 0:
            case = "remote-remote"
        elif old > 0:
            case = "remote-local"
        else:
            case = "local-remote"
        out.append((case, before - after, cost_before - cost_after))
    return out


def sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


# --- knapsack ------------------------------------------------------------


def random_knapsack_instance(rng: RngStream):
    """Integer-MB volumes with u=1 so the unit-quantum DP grid is exact."""
    g = rng.gen
    items = int(g.integers(1, 7))
    r_max = int(g.integers(2, 5))
    r_min = int(g.integers(1, r_max))
    volumes = g.integers(1, 4, size=items).astype(float)
    theta = g.normal(0.0, 2.0, size=items)
    min_spend = ((np.minimum(r_min + 1, r_max)) * volumes).sum()
    budget = int(g.integers(int(min_spend), 31)) if min_spend <= 30 else int(min_spend)
    return theta, volumes, 1.0, float(budget), r_min, r_max


def enumerate_knapsack(theta, volumes, u, budget, r_min, r_max):
    """Exhaustive search over all level assignments; the independent optimum."""
    best = None
    for combo in itertools.product(range(r_min, r_max + 1), repeat=len(volumes)):
        levels = np.array(combo)
        beta = (levels < r_max).astype(float)
        spend = float((u * (levels + beta) * volumes).sum())
        if spend > budget + 1e-9:
            continue
        value = float((u * (levels + beta) * volumes * theta).sum())
        if best is None or value > best:
            best = value
    return best


# --- gradient check ------------------------------------------------------


def random_toy_net(rng: RngStream):
    """Small net + batch with activations kept away from ReLU/Huber kinks so
    central differences are trustworthy."""
    g = rng.gen
    for _ in range(200):
        sizes = (int(g.integers(2, 6)), int(g.integers(3, 8)), int(g.integers(2, 5)))
        net = qnet.init_network(sizes, rng.child(f"net{g.integers(1 << 30)}"))
        batch = int(g.integers(1, 4))
        x = g.normal(0.0, 1.0, size=(batch, sizes[0]))
        weights = g.uniform(0.5, 3.0, size=(batch, sizes[-1]))
        acts = qnet._forward_cached(net, x, None)
        pred = np.einsum("bo,bo->b", acts[-1], weights)
        targets = pred + g.uniform(-3.0, 3.0, size=batch)
        err = np.abs(pred - targets)
        pre_relu = x @ net.weights[0].T + net.biases[0]
        if np.abs(pre_relu).min() > 1e-2 and np.abs(err - 1.0).min() > 1e-2:
            return net, x, weights, targets
    raise RuntimeError("could not build a kink-free toy net")


def numeric_grads(net, x, weights, targets, eps: float = 1e-6):
    grads_w, grads_b = [], []
    for li in range(len(net.weights)):
        gw = np.zeros_like(net.weights[li])
        for idx in np.ndindex(*net.weights[li].shape):
            orig = net.weights[li][idx]
            net.weights[li][idx] = orig + eps
            up, _, _ = qnet.loss_and_grads(net, x, weights, targets)
            net.weights[li][idx] = orig - eps
            dn, _, _ = qnet.loss_and_grads(net, x, weights, targets)
            net.weights[li][idx] = orig
            gw[idx] = (up - dn) / (2 * eps)
        grads_w.append(gw)
        gb = np.zeros_like(net.biases[li])
        for j in range(net.biases[li].size):
            orig = net.biases[li][j]
            net.biases[li][j] = orig + eps
            up, _, _ = qnet.loss_and_grads(net, x, weights, targets)
            net.biases[li][j] = orig - eps
            dn, _, _ = qnet.loss_and_grads(net, x, weights, targets)
            net.biases[li][j] = orig
            gb[j] = (up - dn) / (2 * eps)
        grads_b.append(gb)
    return grads_w, grads_b


def max_grad_error(net, x, weights, targets) -> float:
    _, aw, ab = qnet.loss_and_grads(net, x, weights, targets)
    nw, nb = numeric_grads(net, x, weights, targets)
    worst = 0.0
    for a, n in zip(aw + ab, nw + nb):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# --- suite runner --------------------------------------------------------


def run(seed: int = 0) -> int:
    failures = 0

    rng = RngStream(seed, "selftest/knapsack")
    bad = 0
    for i in range(50):
        theta, volumes, u, budget, r_min, r_max = random_knapsack_instance(
            rng.child(f"i{i}"))
        levels, infeasible = knapsack.solve(theta, volumes, u, budget, r_min, r_max)
        got = knapsack.profile_value(theta, volumes, u, r_min, r_max, levels)
        want = enumerate_knapsack(theta, volumes, u, budget, r_min, r_max)
        if infeasible or want is None or abs(got - want) > 1e-9:
            bad += 1
    print(f"[{'PASS' if bad == 0 else 'FAIL'}] knapsack vs enumeration: "
          f"{50 - bad}/50 instances exact")
    failures += bad > 0

    rng = RngStream(seed, "selftest/ne")
    bad = 0
    for i in range(20):
        inst = random_game_instance(rng.child(f"i{i}"))
        outcome = run_to_ne(inst)
        ok = (outcome.is_ne and oracle_is_ne(inst, outcome.channels)
              and outcome.iterations <= outcome.bound)
        bad += not ok
    print(f"[{'PASS' if bad == 0 else 'FAIL'}] NE convergence + iteration bound: "
          f"{20 - bad}/20 instances")
    failures += bad > 0

    rng = RngStream(seed, "selftest/sgn")
    checked = mismatched = 0
    for i in range(20):
        inst = random_game_instance(rng.child(f"i{i}"))
        for case, dphi, dcost in sample_sign_checks(inst, rng.child(f"d{i}"), 15):
            checked += 1
            mismatched += sign(dphi) != sign(dcost)
    status = "PASS" if (mismatched == 0 and checked >= 200) else "FAIL"
    print(f"[{status}] ordinal-potential sign equality: "
          f"{checked - mismatched}/{checked} deviations agree")
    failures += status == "FAIL"

    rng = RngStream(seed, "selftest/grad")
    worst = 0.0
    for i in range(5):
        net, x, w, y = random_toy_net(rng.child(f"i{i}"))
        worst = max(worst, max_grad_error(net, x, w, y))
    status = "PASS" if worst < 1e-4 else "FAIL"
    print(f"[{status}] gradient check: max relative error {worst:.2e}")
    failures += status == "FAIL"

    return 1 if failures else 0
