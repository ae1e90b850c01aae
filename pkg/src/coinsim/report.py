"""Figure rendering for emitted metrics CSVs. Consumes the CSV contract only;
nothing in the simulation path depends on this module."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import CSV_COLUMNS, read_csv

POLICY_LABELS = {
    "proposed": "Proposed",
    "opg": "OPG",
    "opg_rand": "OPG-Rand",
    "mec": "MEC",
    "random": "Random",
}


def _per_episode(rows, field):
    """policy -> (episodes, per-episode means of field)."""
    acc = defaultdict(lambda: defaultdict(list))
    for row in rows:
        acc[row["policy"]][row["episode"]].append(row[field])
    out = {}
    for policy, by_ep in acc.items():
        eps = sorted(by_ep)
        out[policy] = (eps, [float(np.mean(by_ep[e])) for e in eps])
    return out


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_metrics(csv_path, out_dir) -> list:
    """Render cost/reward learning curves and the load-distribution bars next
    to the metrics CSV. Returns the written figure paths."""
    rows = read_csv(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    for field, ylabel, fname in (("avg_cost", "average cost", "cost_per_episode.png"),
                                 ("reward", "average reward", "reward_per_episode.png")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for policy, (eps, values) in sorted(_per_episode(rows, field).items()):
            ax.plot(eps, values, label=POLICY_LABELS.get(policy, policy))
        ax.set_xlabel("episode")
        ax.set_ylabel(ylabel)
        ax.legend()
        written.append(_save(fig, os.path.join(out_dir, fname)))

    policies = sorted({row["policy"] for row in rows})
    fracs = np.array([[np.mean([r[f] for r in rows if r["policy"] == p])
                       for f in ("frac_local", "frac_fin", "frac_ein")]
                      for p in policies])
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(policies))
    bottom = np.zeros(len(policies))
    for i, label in enumerate(("local", "FIN", "EIN")):
        ax.bar(x, fracs[:, i], bottom=bottom, label=label)
        bottom += fracs[:, i]
    ax.set_xticks(x)
    ax.set_xticklabels([POLICY_LABELS.get(p, p) for p in policies])
    ax.set_ylabel("load fraction")
    ax.legend()
    written.append(_save(fig, os.path.join(out_dir, "load_fractions.png")))
    return written


def render_sweep(summary_rows, out_dir) -> list:
    """Cost and reward against the swept parameter, one line per policy."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    param = summary_rows[0]["param"] if summary_rows else "value"
    for field, ylabel, fname in (("mean_cost", "average cost", "sweep_cost.png"),
                                 ("mean_reward", "average reward", "sweep_reward.png")):
        fig, ax = plt.subplots(figsize=(6, 4))
        policies = sorted({row["policy"] for row in summary_rows})
        for policy in policies:
            pts = sorted((row["value"], row[field]) for row in summary_rows
                         if row["policy"] == policy)
            ax.plot([v for v, _ in pts], [y for _, y in pts], marker="o",
                    label=POLICY_LABELS.get(policy, policy))
        ax.set_xlabel(param)
        ax.set_ylabel(ylabel)
        ax.legend()
        written.append(_save(fig, os.path.join(out_dir, fname)))
    return written
