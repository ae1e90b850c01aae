"""Bounded knapsack over per-subtask redundancy levels on an integer budget grid.

Each subtask must carry some level a in [r_min, r_max]; its chain spend is
u * (a + beta(a)) * V_f with beta(a) = 1 iff a < r_max. The DP maximizes the
spend-weighted theta objective subject to the budget. Weights are ceiled onto
the quantum grid, so quantization can only tighten the budget, never break it.
"""

from __future__ import annotations

import numpy as np

NEG = -np.inf


def level_grid(r_min: int, r_max: int) -> np.ndarray:
    return np.arange(r_min, r_max + 1)


def spend_per_level(volumes_mb: np.ndarray, u: float, r_min: int,
                    r_max: int) -> np.ndarray:
    """True spend u*(a+beta)*V_f for every (subtask, level), shape (F, L)."""
    levels = level_grid(r_min, r_max)
    beta = (levels < r_max).astype(float)
    return u * (levels + beta)[None, :] * np.asarray(volumes_mb, dtype=float)[:, None]


def _int_weights(raw: np.ndarray, quantum: float) -> np.ndarray:
    # small slack keeps exactly-integer spends from ceiling up a grid cell
    return np.ceil(raw / quantum - 1e-9).astype(np.int64)


def solve(theta, volumes_mb, u, budget, r_min, r_max, quantum: float = 1.0,
          objective: str = "max"):
    """Pick one level per subtask maximizing sum of spend*theta within the budget.

    Returns (levels, infeasible). Subtasks whose cheapest level alone overflows
    the budget are must-carried at r_min and flagged; if the remaining set still
    cannot fit, everything falls back to r_min, flagged.
    objective="min" flips the optimization sense (kept for comparison runs).
    """
    theta = np.asarray(theta, dtype=float)
    volumes_mb = np.asarray(volumes_mb, dtype=float)
    if theta.shape != volumes_mb.shape:
        raise ValueError("theta and volumes must align per subtask")
    if objective not in ("max", "min"):
        raise ValueError(f"objective must be 'max' or 'min', got {objective!r}")
    num_items = theta.size
    raw = spend_per_level(volumes_mb, u, r_min, r_max)
    values = raw * theta[:, None]
    if objective == "min":
        values = -values
    weights = _int_weights(raw, quantum)
    cap = int(np.floor(budget / quantum + 1e-9))

    levels_out = np.full(num_items, r_min, dtype=int)
    infeasible = False
    usable = []
    for f in range(num_items):
        if weights[f].min() > cap:
            infeasible = True   # must-carry: held at r_min outside the budget
        else:
            usable.append(f)

    if usable:
        dp = np.zeros(cap + 1)
        choice = np.zeros((len(usable), cap + 1), dtype=np.int16)
        for i, f in enumerate(usable):
            best = np.full(cap + 1, NEG)
            pick = np.zeros(cap + 1, dtype=np.int16)
            for a in range(weights.shape[1]):
                w = int(weights[f, a])
                if w > cap:
                    continue
                cand = np.full(cap + 1, NEG)
                cand[w:] = dp[:cap + 1 - w] + values[f, a]
                # >= so value ties resolve to the higher level (the beta kink
                # makes r_max and r_max-1 carry identical spend and value)
                better = cand >= best
                best[better] = cand[better]
                pick[better] = a
            dp, choice[i] = best, pick
        if not np.isfinite(dp[cap]):
            return np.full(num_items, r_min, dtype=int), True
        c = cap
        for i in range(len(usable) - 1, -1, -1):
            a = int(choice[i, c])
            levels_out[usable[i]] = r_min + a
            c -= int(weights[usable[i], a])
    return levels_out, infeasible


def max_values(thetas, volumes_mb, u, budget, r_min, r_max,
               quantum: float = 1.0) -> np.ndarray:
    """Batched optimal objective values (no backtracking), for TD targets.

    thetas: (B, F). Infeasible rows fall back to the all-r_min action's value,
    matching the action selector's fallback.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    volumes_mb = np.asarray(volumes_mb, dtype=float)
    raw = spend_per_level(volumes_mb, u, r_min, r_max)
    weights = _int_weights(raw, quantum)
    cap = int(np.floor(budget / quantum + 1e-9))
    batch = thetas.shape[0]

    usable = [f for f in range(volumes_mb.size) if weights[f].min() <= cap]
    skipped = [f for f in range(volumes_mb.size) if weights[f].min() > cap]

    dp = np.zeros((batch, cap + 1))
    for f in usable:
        best = np.full((batch, cap + 1), NEG)
        for a in range(weights.shape[1]):
            w = int(weights[f, a])
            if w > cap:
                continue
            cand = np.full((batch, cap + 1), NEG)
            cand[:, w:] = dp[:, :cap + 1 - w] + raw[f, a] * thetas[:, f, None]
            np.maximum(best, cand, out=best)
        dp = best
    out = dp[:, cap] if usable else np.zeros(batch)
    for f in skipped:
        out = out + raw[f, 0] * thetas[:, f]
    fallback = thetas @ raw[:, 0]
    bad = ~np.isfinite(out)
    if bad.any():
        out = np.where(bad, fallback, out)
    return out


def profile_value(theta, volumes_mb, u, r_min, r_max, levels) -> float:
    """Objective value of a given level assignment (spend-weighted theta sum)."""
    raw = spend_per_level(volumes_mb, u, r_min, r_max)
    idx = np.asarray(levels, dtype=int) - r_min
    return float(sum(raw[f, idx[f]] * theta[f] for f in range(len(idx))))
