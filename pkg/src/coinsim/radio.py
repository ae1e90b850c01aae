"""Wireless uplink model: channel gain, co-channel interference, achievable rate,
and the interference threshold that decides when offloading beats local execution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemParams, RngStream

# 2^x beyond this is inf in float64 anyway; keeps exp2 overflow silent and exact in the limit
_EXP2_CAP = 2048.0

NEVER_OFFLOAD = float("-inf")


@dataclass
class ChannelState:
    """Per-user uplink state toward the access point: gain = fading * distance^-n."""

    distances: np.ndarray   # (K,) m
    fading: np.ndarray      # (K,) unit-mean exponential draw
    gains: np.ndarray       # (K,)

    @property
    def num_users(self) -> int:
        return self.distances.shape[0]


def channel_gain(distance: float, fading: float, exponent: float) -> float:
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return fading * distance ** (-exponent)


def draw_positions(params: SystemParams, rng: RngStream) -> np.ndarray:
    """User positions uniform in the square cell; access point at the center."""
    return rng.gen.uniform(0.0, params.cell_size_m, size=(params.num_users, 2))


def distances_to_center(positions: np.ndarray, params: SystemParams) -> np.ndarray:
    center = np.array([params.cell_size_m / 2.0, params.cell_size_m / 2.0])
    d = np.linalg.norm(positions - center, axis=1)
    return np.maximum(d, 1.0)  # clamp inside the near-field singularity


def draw_channel_state(distances: np.ndarray, params: SystemParams,
                       rng: RngStream) -> ChannelState:
    """Redraw i.i.d. Exp(1) small-scale fading for one slot."""
    fading = rng.gen.exponential(1.0, size=distances.shape[0])
    gains = fading * distances ** (-params.path_loss_exp)
    return ChannelState(distances=distances, fading=fading, gains=gains)


def rx_power(state: ChannelState, params: SystemParams) -> np.ndarray:
    """rho_k * eta_k per user, the quantity the game's potential is built from."""
    return params.tx_power_w * state.gains


def interference(k: int, assignment: np.ndarray, state: ChannelState,
                 params: SystemParams) -> float:
    """Sum of rho_n * eta_n over co-channel peers of user k.

    assignment holds one channel index per user: 0 = local, 1..M = channel.
    """
    ch = assignment[k]
    if ch == 0:
        raise ValueError(f"user {k} executes locally; interference is undefined")
    power = rx_power(state, params)
    mask = (assignment == ch)
    mask[k] = False
    return float(power[mask].sum())


def rate_for_interference(rho_eta: float, interference_w: float,
                          params: SystemParams) -> float:
    """Eq.-(3)-style uplink rate (B/M) * log2(1 + SINR), bit/s."""
    sinr = rho_eta / (interference_w + params.noise_var_w)
    return params.bandwidth_hz / params.num_channels * np.log2(1.0 + sinr)


def uplink_rate(k: int, assignment: np.ndarray, state: ChannelState,
                params: SystemParams) -> float:
    rho_eta = params.tx_power_w * state.gains[k]
    return rate_for_interference(rho_eta, interference(k, assignment, state, params), params)


def rate_threshold(phi: float, gain: float, rho_eta: float,
                   params: SystemParams) -> float:
    """Interference level below which remote execution is the cheaper choice.

    phi  = sum over subtasks of (I+V)*(dT + dE*rho), the 1/omega cost coefficient
    gain = sum over subtasks of (local cost - rate-independent remote cost)

    Offloading wins iff the achieved rate exceeds phi/gain; inverting the rate
    expression gives lambda = rho*eta / (2^(M*phi/(B*gain)) - 1) - sigma^2.
    Non-positive gain means local always wins: returns the NEVER_OFFLOAD sentinel.
    """
    if gain <= 0.0:
        return NEVER_OFFLOAD
    exponent = params.num_channels * phi / (params.bandwidth_hz * gain)
    with np.errstate(over="ignore"):
        denom = np.exp2(min(exponent, _EXP2_CAP)) - 1.0
    if not np.isfinite(denom):
        return -params.noise_var_w  # asymptote: offloading needs unbounded SINR
    return float(rho_eta / denom - params.noise_var_w)


def interference_threshold(k: int, subtask, state: ChannelState,
                           params: SystemParams, dest: int) -> float:
    """Single-subtask threshold lambda_k for user k offloading to dest (0=FIN, 1=EIN)."""
    dT, dE = params.delay_weight, params.energy_weight
    rho = params.tx_power_w
    phi = subtask.data_bits * (dT + dE * rho)
    t_local = subtask.load_cycles / params.cpu_local_hz
    e_local = params.energy_coeff * params.cpu_local_hz ** 2 * subtask.load_cycles
    f_dest = params.cpu_ein_hz if dest else params.cpu_fin_hz
    t_exe = subtask.load_cycles / f_dest
    gain = dT * (t_local - t_exe) + dE * e_local
    return rate_threshold(phi, gain, rho * state.gains[k], params)
