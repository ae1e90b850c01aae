"""Blockchain redundancy state, spend/incentive accounting, and the five-phase
consensus latency pipeline (broadcast, pre-prepare, prepare, commit, reply)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemParams, SubtaskSpec


@dataclass
class RedundancyProfile:
    """Per-subtask replica counts r_f plus the derived redundancy-aware flags.

    beta_f = 1 iff r_f < r_max (partial replication); 0 means full replication.
    """

    levels: np.ndarray  # (n,) int
    beta: np.ndarray    # (n,) int in {0,1}

    @classmethod
    def from_levels(cls, levels, r_max: int) -> "RedundancyProfile":
        levels = np.asarray(levels, dtype=int)
        beta = (levels < r_max).astype(int)
        return cls(levels=levels, beta=beta)

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class Violation:
    constraint: str     # "budget" (spend cap) or "max_redundancy"
    index: int          # offending subtask, -1 for aggregate constraints
    detail: str


def spend_weights(profile: RedundancyProfile, subtasks, price_per_mb: float) -> np.ndarray:
    volumes_mb = np.array([s.software_mb for s in subtasks])
    return price_per_mb * (profile.beta + profile.levels) * volumes_mb


def bc_spend(profile: RedundancyProfile, subtasks, price_per_mb: float) -> float:
    """Total chain spend: sum of u * (beta_f + r_f) * V_f over the profile."""
    if len(profile) == 0:
        return 0.0
    return float(spend_weights(profile, subtasks, price_per_mb).sum())


def check_redundancy(profile: RedundancyProfile, subtasks,
                     params: SystemParams) -> Violation | None:
    """Validate a redundancy profile against the replication cap and the spend budget.

    Returns None when both constraints hold, else the first violation found.
    """
    if len(profile) != len(subtasks):
        raise ValueError(f"profile has {len(profile)} entries for {len(subtasks)} subtasks")
    combined = profile.beta + profile.levels
    over = np.where(combined > params.r_max)[0]
    if over.size:
        i = int(over[0])
        return Violation("max_redundancy", i,
                         f"beta+r = {combined[i]} exceeds r_max = {params.r_max} at subtask {i}")
    spend = bc_spend(profile, subtasks, params.price_per_mb)
    if spend > params.bc_budget + 1e-9:
        return Violation("budget", -1,
                         f"spend {spend:.6g} exceeds budget {params.bc_budget:.6g}")
    return None


def mining_incentive(subtask: SubtaskSpec, incentive_per_mb: float) -> float:
    """Mining credit for one subtask carried on chain: rate * (I_f + V_f) in MB."""
    return incentive_per_mb * subtask.data_mb


@dataclass(frozen=True)
class ConsensusCost:
    broadcast: float
    pre_prepare: float
    prepare: float
    commit: float
    reply: float

    @property
    def total(self) -> float:
        return self.broadcast + self.pre_prepare + self.prepare + self.commit + self.reply


def consensus_latency(subtask: SubtaskSpec, r: int, omega: float,
                      params: SystemParams) -> ConsensusCost:
    """Latency of replicating one offloaded subtask across the BC consortium.

    r = 0 means no replication: nothing rides the chain beyond the data
    broadcast itself, so every consensus round is skipped.
    """
    if omega <= 0:
        raise ValueError(f"uplink rate must be positive, got {omega}")
    if r < 0:
        raise ValueError(f"redundancy level must be >= 0, got {r}")
    nodes = params.node_cpus()
    if min(nodes) <= 0:
        raise ValueError("BC node frequencies must be positive")

    data = subtask.data_bits
    tx_time = data / omega
    if r == 0:
        return ConsensusCost(tx_time, 0.0, 0.0, 0.0, 0.0)

    sig, ver = params.sig_cost_cycles, params.verify_cost_cycles
    qb, m, nf = params.block_txs, params.num_eins, params.num_faulty
    f_primary = nodes[0]
    block_tx = r * qb * data / omega

    broadcast = tx_time + r * qb * (sig + ver) / f_primary
    pre_prepare = (block_tx
                   + (sig + (m - 1) * ver) / f_primary
                   + max((sig + ver) * (qb + 1) / fj for fj in nodes))
    cross_verify = max((2 * nf * (sig + ver) + sig + (m - 1) * ver) / fj for fj in nodes)
    prepare = block_tx + cross_verify
    commit = block_tx + cross_verify
    reply = (block_tx
             + max(qb * (sig + ver) / fj for fj in nodes)
             + 2 * nf * qb * (sig + ver) / f_primary)
    return ConsensusCost(broadcast, pre_prepare, prepare, commit, reply)
