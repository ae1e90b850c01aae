"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
The headline-comparison run (criterion 5) trains five seeds and takes a few
minutes; everything else finishes in seconds.
"""

import dataclasses
import time

import numpy as np
import pytest

from coinsim import knapsack
from coinsim.agent import RedundancyAgent
from coinsim.chain import check_redundancy
from coinsim.cli import main as cli_main
from coinsim.config import RngStream, SystemParams
from coinsim.harness import Environment, run_experiment, run_slot, run_sweep
from coinsim.selftest import (enumerate_knapsack, max_grad_error, oracle_is_ne,
                              random_game_instance, random_knapsack_instance,
                              random_toy_net, sample_sign_checks, sign)


def _report(num, name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num} ({name}): {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def test_criterion_1_knapsack_optimality():
    start = time.perf_counter()
    rng = RngStream(101, "acc/knapsack")
    exact = 0
    for i in range(200):
        theta, volumes, u, budget, r_min, r_max = random_knapsack_instance(
            rng.child(f"i{i}"))
        levels, infeasible = knapsack.solve(theta, volumes, u, budget,
                                            r_min, r_max)
        got = knapsack.profile_value(theta, volumes, u, r_min, r_max, levels)
        want = enumerate_knapsack(theta, volumes, u, budget, r_min, r_max)
        exact += (not infeasible and want is not None and got == want)
    elapsed = time.perf_counter() - start
    _report(1, "knapsack optimality",
            exact == 200 and elapsed < 5.0,
            f"{exact}/200 instances exact in {elapsed:.2f}s (< 5s)")


def test_criterion_2_ne_convergence_and_bound():
    start = time.perf_counter()
    rng = RngStream(102, "acc/ne")
    converged = verified = bounded = 0
    for i in range(100):
        inst = random_game_instance(rng.child(f"i{i}"), max_users=10,
                                    max_channels=4, max_subtasks=3)
        outcome = run_to_ne_cached(inst)
        converged += outcome.is_ne
        verified += oracle_is_ne(inst, outcome.channels)
        bounded += outcome.iterations <= outcome.bound
    elapsed = time.perf_counter() - start
    ok = converged == verified == bounded == 100 and elapsed < 30.0
    _report(2, "NE convergence",
            ok, f"{converged}/100 converged, {verified}/100 oracle-verified, "
                f"{bounded}/100 within bound, {elapsed:.1f}s (< 30s)")


def run_to_ne_cached(inst):
    from coinsim.game import run_to_ne
    return run_to_ne(inst)


def test_criterion_3_ordinal_potential_sign_equality():
    rng = RngStream(103, "acc/sgn")
    checked = agreed = 0
    cases = {"remote-remote": 0, "remote-local": 0, "local-remote": 0}
    i = 0
    while checked < 1000:
        inst = random_game_instance(rng.child(f"i{i}"), max_users=8,
                                    max_channels=4, max_subtasks=3)
        for case, dphi, dcost in sample_sign_checks(inst, rng.child(f"d{i}"), 30):
            checked += 1
            agreed += sign(dphi) == sign(dcost)
            cases[case] += 1
        i += 1
    ok = agreed == checked and all(v > 0 for v in cases.values())
    _report(3, "ordinal potential",
            ok, f"{agreed}/{checked} deviations agree "
                f"(cases: {cases['remote-remote']}/{cases['remote-local']}"
                f"/{cases['local-remote']})")


def test_criterion_4_gradient_correctness():
    rng = RngStream(104, "acc/grad")
    worst = 0.0
    for i in range(50):
        net, x, weights, targets = random_toy_net(rng.child(f"i{i}"))
        worst = max(worst, max_grad_error(net, x, weights, targets))
    _report(4, "gradient correctness", worst < 1e-4,
            f"max relative error {worst:.2e} over 50 nets (< 1e-4)")


def test_criterion_5_headline_comparison():
    # Table III scale (K=30, V=4), 1000 training then 100 frozen evaluation
    # episodes at 2 slots/episode; proposed must cut cost to <= 0.75x OPG and
    # lift reward to >= 1.3x OPG in at least 4 of 5 seeds
    start = time.perf_counter()
    seed_wins = []
    for seed in range(5):
        params = dataclasses.replace(SystemParams(), seed=seed,
                                     slots_per_episode=2).validate()
        rows, _ = run_experiment(params, ["proposed", "opg"],
                                 eval_episodes=100, train_episodes=1000)
        means = {}
        for policy in ("proposed", "opg"):
            sel = [r for r in rows["eval"] if r["policy"] == policy]
            means[policy] = (np.mean([r["avg_cost"] for r in sel]),
                             np.mean([r["reward"] for r in sel]))
        cost_ratio = means["proposed"][0] / means["opg"][0]
        reward_ratio = means["proposed"][1] / means["opg"][1]
        win = cost_ratio <= 0.75 and reward_ratio >= 1.3
        seed_wins.append(win)
        print(f"  seed {seed}: cost ratio {cost_ratio:.3f} (<= 0.75), "
              f"reward ratio {reward_ratio:.2f} (>= 1.3) "
              f"{'ok' if win else 'MISS'}")
    elapsed = time.perf_counter() - start
    wins = sum(seed_wins)
    _report(5, "headline comparison", wins >= 4,
            f"{wins}/5 seeds meet both ratios, {elapsed / 60:.1f} min (< 30 min)")


def test_criterion_6_rmax_sweep_trend():
    params = dataclasses.replace(SystemParams(), seed=7,
                                 slots_per_episode=2).validate()
    _, summary = run_sweep(params, "r_max", [5, 10, 20, 30],
                           ["proposed", "opg"], eval_episodes=50,
                           train_episodes=150)
    opg = {row["value"]: row["mean_cost"] for row in summary
           if row["policy"] == "opg"}
    prop = {row["value"]: row["mean_cost"] for row in summary
            if row["policy"] == "proposed"}
    values = [5, 10, 20, 30]
    monotone = all(opg[a] < opg[b] for a, b in zip(values, values[1:]))
    below = all(prop[v] < opg[v] for v in values)
    detail = ", ".join(f"r_max={v}: opg {opg[v]:.1f} vs proposed {prop[v]:.1f}"
                       for v in values)
    _report(6, "r_max sweep trend", monotone and below, detail)


def test_criterion_7_constraint_safety():
    params = dataclasses.replace(SystemParams(), seed=31,
                                 slots_per_episode=2).validate()
    env = Environment(params, "train")
    agent = RedundancyAgent(params, env.tasks, train_slots=600)
    violations = 0
    checked = 0

    def check(action):
        nonlocal violations, checked
        checked += 1
        if check_redundancy(action.profile(params.r_max), env.flat_subtasks,
                            params) is not None:
            violations += 1

    for _ in range(600):
        run_slot(env, "proposed", agent, check=check)
    agent.frozen = True
    eval_env = Environment(params, "eval")
    for _ in range(100):
        run_slot(eval_env, "proposed", agent, check=check)
    _report(7, "constraint safety", violations == 0 and checked == 700,
            f"{violations} violations across {checked} emitted actions")


def test_criterion_8_eval_determinism(tmp_path):
    config = tmp_path / "acc.toml"
    config.write_text("num_users = 30\nslots_per_episode = 2\nseed = 17\n")
    outs = [str(tmp_path / d) for d in ("run1", "run2")]
    for out in outs:
        code = cli_main(["eval", "--config", str(config), "--episodes", "3",
                         "--policies", "proposed,opg,opg_rand,mec,random",
                         "--out-dir", out, "--no-figures"])
        assert code == 0
    b1 = open(f"{outs[0]}/eval_metrics.csv", "rb").read()
    b2 = open(f"{outs[1]}/eval_metrics.csv", "rb").read()
    _report(8, "determinism", b1 == b2,
            f"byte-identical CSVs of {len(b1)} bytes")


def test_criterion_9_load_distribution():
    params = dataclasses.replace(SystemParams(), num_users=10, seed=23,
                                 slots_per_episode=2).validate()
    rows, _ = run_experiment(params, ["proposed", "opg"], eval_episodes=50,
                             train_episodes=100)
    fracs = {}
    for policy in ("proposed", "opg"):
        sel = [r for r in rows["eval"] if r["policy"] == policy]
        fracs[policy] = float(np.mean([r["frac_local"] for r in sel]))
    ok = all(f < 0.10 for f in fracs.values())
    _report(9, "load distribution", ok,
            f"local fraction proposed {fracs['proposed']:.3f}, "
            f"opg {fracs['opg']:.3f} (each < 0.10)")
