"""Local/FIN/EIN delay, energy and queueing, composed into weighted execution costs.

Weighted cost is always delta_T * delay + delta_E * energy. The BC consensus
term and the queue term can each be dropped per call: the offloading game
prices decisions without consensus latency (its interference threshold is
derived without it), while slot metrics charge the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chain import consensus_latency
from .config import SystemParams, SubtaskSpec

LOCAL, FIN, EIN = 0, 1, 2  # venue codes used across the package


@dataclass(frozen=True)
class ExecutionCost:
    delay: float    # s
    energy: float   # J
    cost: float     # delta_T * delay + delta_E * energy


def weighted(delay: float, energy: float, params: SystemParams) -> ExecutionCost:
    return ExecutionCost(delay, energy,
                         params.delay_weight * delay + params.energy_weight * energy)


@dataclass
class QueueState:
    """Pending service times at one destination, FIFO."""

    tag: str
    pending: list = field(default_factory=list)

    def backlog(self) -> float:
        return sum(self.pending)

    def push(self, service_time: float) -> None:
        if service_time < 0:
            raise ValueError("service time must be non-negative")
        self.pending.append(service_time)

    def drain(self, elapsed: float) -> None:
        """The server works `elapsed` seconds: drop completed entries FIFO."""
        remaining = elapsed
        while self.pending and remaining > 0:
            head = self.pending[0]
            if head <= remaining:
                remaining -= head
                self.pending.pop(0)
            else:
                self.pending[0] = head - remaining
                remaining = 0.0


def queue_delay(queue: QueueState, service_time: float,
                arrival_rate: float | None = None) -> float:
    """M/M/1-style queue delay for a job with the given service time.

    With the default arrival rate a = 1/S and service rate 1/(backlog + S),
    the utilization u = (backlog + S)/S is >= 1 whenever the queue is
    non-empty, so the sum branch applies; the u^2/(1-u) branch is reachable
    only under alternative arrival-rate configurations with u < 1.
    """
    if service_time <= 0:
        raise ValueError(f"service time must be positive, got {service_time}")
    backlog = queue.backlog()
    arrival = arrival_rate if arrival_rate is not None else 1.0 / service_time
    if not queue.pending:
        utilization = 1.0
    else:
        rate = 1.0 / (backlog + service_time)
        utilization = arrival / rate
    if utilization >= 1.0:
        return backlog + service_time
    return utilization ** 2 / (1.0 - utilization) * service_time


def local_cost(subtask: SubtaskSpec, params: SystemParams) -> ExecutionCost:
    """On-device execution: delay P/F_L, energy tau * F_L^2 * P."""
    delay = subtask.load_cycles / params.cpu_local_hz
    energy = params.energy_coeff * params.cpu_local_hz ** 2 * subtask.load_cycles
    return weighted(delay, energy, params)


def _remote_cost(subtask, omega, r, queue, params, cpu_hz, *,
                 include_bc, include_queue) -> ExecutionCost:
    if omega <= 0:
        raise ValueError(f"uplink rate must be positive, got {omega}")
    tx_time = subtask.data_bits / omega
    exe_time = subtask.load_cycles / cpu_hz
    delay = exe_time + tx_time
    if include_bc and params.bc_enabled:
        delay += consensus_latency(subtask, r, omega, params).total
    if include_queue and params.queues_enabled and queue is not None:
        delay += queue_delay(queue, exe_time + tx_time)
    energy = params.tx_power_w * tx_time
    return weighted(delay, energy, params)


def fin_cost(subtask: SubtaskSpec, omega: float, r: int, queue: QueueState | None,
             params: SystemParams, *, include_bc: bool = True,
             include_queue: bool = True) -> ExecutionCost:
    """Fog-node execution: processing + transmission + consensus + queue delay."""
    return _remote_cost(subtask, omega, r, queue, params, params.cpu_fin_hz,
                        include_bc=include_bc, include_queue=include_queue)


def ein_cost(subtask: SubtaskSpec, omega: float, r: int, queue: QueueState | None,
             params: SystemParams, *, include_bc: bool = True,
             include_queue: bool = True) -> ExecutionCost:
    """Edge-node execution: as fin_cost with the EIN frequency and queue."""
    return _remote_cost(subtask, omega, r, queue, params, params.cpu_ein_hz,
                        include_bc=include_bc, include_queue=include_queue)


def slot_cost(venues, costs) -> float:
    """Per-user slot cost: each subtask charges exactly one venue's weighted cost.

    venues: per-subtask venue codes (LOCAL/FIN/EIN); costs: matching triples
    (local, fin, ein) of ExecutionCost, with the remote entries already priced
    at the subtask's redundancy level.
    """
    if len(venues) != len(costs):
        raise ValueError("one venue decision required per subtask")
    total = 0.0
    for venue, (local, fin, ein) in zip(venues, costs):
        if venue == LOCAL:
            total += local.cost
        elif venue == FIN:
            total += fin.cost
        elif venue == EIN:
            total += ein.cost
        else:
            raise ValueError(f"invalid venue code {venue}")
    return total
