"""System parameters, task/request generation, and deterministic RNG substreams.

All quantities are SI internally (bits, cycles, seconds, joules, watts).
Config files use human units (MB, GHz, gigacycles) and are converted on load.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

MB_BITS = 8e6
GB_BITS = 8e9
GHZ = 1e9

# task sampling presets: (input MB range, software MB range, load gigacycle range)
TASK_PRESETS = {
    "default": ((1.0, 10.0), (1.0, 10.0), (1.0, 10.0)),
    "data_intensive": ((10.0, 20.0), (500.0, 2000.0), (1.0, 4.0)),
    "compute_intensive": ((1.0, 4.0), (500.0, 2000.0), (5.0, 20.0)),
}


class ConfigError(ValueError):
    """A config file failed to parse or violated a parameter invariant."""


class RngStream:
    """Seeded counter-based generator; same (seed, label) always replays the same draws."""

    def __init__(self, seed: int, label: str = "root"):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")

    def state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


@dataclass(frozen=True)
class RlParams:
    learning_rate: float = 8e-4     # Table III "DNN learning rate"
    discount: float = 0.9           # Table III gamma
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6     # fraction of training slots over which eps decays
    replay_capacity: int = 10_000   # Table III E
    batch_size: int = 32            # Table III
    target_sync: int = 50           # copy main -> target every g slots
    hidden_sizes: tuple = (128, 128)
    input_dropout: float = 0.2


@dataclass(frozen=True)
class SystemParams:
    # population / topology
    num_users: int = 30             # K
    num_tasks: int = 6              # F
    num_subtasks: int = 4           # V per task
    num_channels: int = 10          # M
    cell_size_m: float = 200.0      # users uniform in cell, access point at center

    # radio
    bandwidth_hz: float = 50e6      # B
    tx_power_w: float = 0.5         # rho
    noise_var_w: float = 2e-13      # sigma^2
    path_loss_exp: float = 3.0      # n

    # computing
    cpu_local_hz: float = 1e9       # F^L
    cpu_fin_hz: float = 60e9        # F^FIN
    cpu_ein_hz: float = 100e9       # F^EIN
    cache_fin_bits: float = 3 * GB_BITS
    cache_ein_bits: float = 5 * GB_BITS
    energy_coeff: float = 5e-27     # tau, J.s^2/cycle^3
    delay_weight: float = 0.5       # delta^T
    energy_weight: float = 0.5      # delta^E
    subtask_deadline_s: float = 10.0  # mu; also the slot length

    # blockchain
    bc_budget: float = 600.0        # P_BC, price units per slot
    price_per_mb: float = 1.0       # u
    incentive_per_mb: float = 0.1
    r_min: int = 1
    r_max: int = 10
    block_txs: int = 10             # Q^b
    sig_cost_cycles: float = 1e6
    verify_cost_cycles: float = 1e6
    num_eins: int = 3               # m
    num_faulty: int = 1             # n
    bc_node_cpus_hz: tuple = ()     # empty -> cpu_fin for FIN + each EIN
    bc_enabled: bool = True
    queues_enabled: bool = True

    # reward
    reward_w1: float = 0.5
    reward_w2: float = 0.5

    # task sampling (uniform within range)
    input_range_mb: tuple = (1.0, 10.0)
    software_range_mb: tuple = (1.0, 10.0)
    load_range_gc: tuple = (1.0, 10.0)

    # requests: row-stochastic (F+1)^2 matrix as nested tuples; None -> uniform
    request_transition: tuple | None = None

    # harness
    slots_per_episode: int = 200
    rl: RlParams = field(default_factory=RlParams)
    seed: int = 0

    def node_cpus(self) -> tuple:
        """BC consortium node frequencies: the FIN plus each EIN."""
        if self.bc_node_cpus_hz:
            return self.bc_node_cpus_hz
        return (self.cpu_fin_hz,) * (1 + self.num_eins)

    def validate(self) -> "SystemParams":
        w = self.delay_weight + self.energy_weight
        if abs(w - 1.0) > 1e-12 or not (0 <= self.delay_weight <= 1):
            raise ConfigError(
                f"delay/energy weights must sum to 1 in [0,1]: got "
                f"{self.delay_weight} + {self.energy_weight} = {w}"
            )
        if not (isinstance(self.r_min, int) and isinstance(self.r_max, int)):
            raise ConfigError("r_min and r_max must be integers")
        if not (1 <= self.r_min < self.r_max):
            raise ConfigError(f"need 1 <= r_min < r_max, got r_min={self.r_min} r_max={self.r_max}")
        if not (0.0 < self.rl.discount < 1.0):
            raise ConfigError(f"discount factor must lie in (0,1), got {self.rl.discount}")
        positive = [
            ("num_users", self.num_users), ("num_tasks", self.num_tasks),
            ("num_subtasks", self.num_subtasks), ("num_channels", self.num_channels),
            ("bandwidth_hz", self.bandwidth_hz), ("tx_power_w", self.tx_power_w),
            ("noise_var_w", self.noise_var_w), ("cpu_local_hz", self.cpu_local_hz),
            ("cpu_fin_hz", self.cpu_fin_hz), ("cpu_ein_hz", self.cpu_ein_hz),
            ("cache_fin_bits", self.cache_fin_bits), ("cache_ein_bits", self.cache_ein_bits),
            ("energy_coeff", self.energy_coeff), ("subtask_deadline_s", self.subtask_deadline_s),
            ("price_per_mb", self.price_per_mb), ("cell_size_m", self.cell_size_m),
            ("path_loss_exp", self.path_loss_exp), ("slots_per_episode", self.slots_per_episode),
        ]
        for name, value in positive:
            if value <= 0:
                raise ConfigError(f"{name} must be strictly positive, got {value}")
        if self.bc_budget < 0 or self.incentive_per_mb < 0:
            raise ConfigError("bc_budget and incentive_per_mb must be non-negative")
        for lo, hi, name in [
            (*self.input_range_mb, "input_range_mb"),
            (*self.software_range_mb, "software_range_mb"),
            (*self.load_range_gc, "load_range_gc"),
        ]:
            if lo <= 0 or hi < lo:
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.request_transition is not None:
            validate_transition(np.asarray(self.request_transition, dtype=float),
                                self.num_tasks)
        return self

    def rng(self, label: str = "root") -> RngStream:
        return RngStream(self.seed, label)


@dataclass(frozen=True)
class SubtaskSpec:
    """One subtask: input size I_f, software volume V_f (bits), compute load P_f (cycles)."""

    input_bits: float
    software_bits: float
    load_cycles: float

    def __post_init__(self):
        if min(self.input_bits, self.software_bits, self.load_cycles) <= 0:
            raise ValueError("subtask fields must be strictly positive")

    @property
    def data_bits(self) -> float:
        return self.input_bits + self.software_bits

    @property
    def software_mb(self) -> float:
        return self.software_bits / MB_BITS

    @property
    def data_mb(self) -> float:
        return self.data_bits / MB_BITS


def sample_tasks(params: SystemParams, rng: RngStream, preset: str | None = None):
    """Draw F tasks x V subtasks, each field uniform within its configured range.

    Returns a list of tasks, each a list of SubtaskSpec.
    """
    if preset is not None:
        if preset not in TASK_PRESETS:
            raise ConfigError(f"unknown task preset {preset!r}")
        in_rng, sw_rng, ld_rng = TASK_PRESETS[preset]
    else:
        in_rng, sw_rng, ld_rng = (params.input_range_mb, params.software_range_mb,
                                  params.load_range_gc)
    for lo, hi in (in_rng, sw_rng, ld_rng):
        if hi < lo:
            raise ConfigError(f"inverted sampling range ({lo}, {hi})")
    tasks = []
    for _ in range(params.num_tasks):
        subtasks = []
        for _ in range(params.num_subtasks):
            i_mb = rng.gen.uniform(*in_rng)
            v_mb = rng.gen.uniform(*sw_rng)
            p_gc = rng.gen.uniform(*ld_rng)
            subtasks.append(SubtaskSpec(i_mb * MB_BITS, v_mb * MB_BITS, p_gc * 1e9))
        tasks.append(subtasks)
    return tasks


def uniform_transition(num_tasks: int) -> np.ndarray:
    n = num_tasks + 1
    return np.full((n, n), 1.0 / n)


def validate_transition(matrix: np.ndarray, num_tasks: int) -> np.ndarray:
    n = num_tasks + 1
    if matrix.shape != (n, n):
        raise ConfigError(f"request transition must be {n}x{n}, got {matrix.shape}")
    if (matrix < 0).any():
        raise ConfigError("request transition has negative entries")
    sums = matrix.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > 1e-9)[0]
    if bad.size:
        raise ConfigError(f"request transition row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    return matrix


def step_requests(current: np.ndarray, transition: np.ndarray, rng: RngStream) -> np.ndarray:
    """Advance every user's request state one Markov step (states 0=no request, 1..F)."""
    transition = validate_transition(np.asarray(transition, dtype=float),
                                     transition.shape[0] - 1)
    nxt = np.empty_like(current)
    n = transition.shape[0]
    for k, state in enumerate(current):
        u = rng.gen.random()
        # inverse-CDF over the row keeps a single draw per user
        nxt[k] = np.searchsorted(np.cumsum(transition[state]), u, side="right")
        nxt[k] = min(nxt[k], n - 1)
    return nxt


def _range_pair(raw, name):
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise ConfigError(f"{name} must be a [lo, hi] pair")
    return (float(raw[0]), float(raw[1]))


def load_config(path) -> SystemParams:
    """Load a TOML config; unspecified fields keep their Table III defaults."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None

    top = dict(raw)
    tasks = top.pop("tasks", {})
    chain = top.pop("chain", {})
    rl = top.pop("rl", {})
    requests = top.pop("requests", {})

    kwargs = {}
    scalar_keys = {
        "num_users": int, "num_tasks": int, "num_subtasks": int, "num_channels": int,
        "cell_size_m": float, "noise_var_w": float, "tx_power_w": float,
        "path_loss_exp": float, "energy_coeff": float, "delay_weight": float,
        "energy_weight": float, "subtask_deadline_s": float, "seed": int,
        "slots_per_episode": int,
    }
    unit_keys = {
        "bandwidth_mhz": ("bandwidth_hz", 1e6),
        "cpu_local_ghz": ("cpu_local_hz", GHZ),
        "cpu_fin_ghz": ("cpu_fin_hz", GHZ),
        "cpu_ein_ghz": ("cpu_ein_hz", GHZ),
        "cache_fin_gb": ("cache_fin_bits", GB_BITS),
        "cache_ein_gb": ("cache_ein_bits", GB_BITS),
    }
    for key, value in top.items():
        if key in scalar_keys:
            kwargs[key] = scalar_keys[key](value)
        elif key in unit_keys:
            name, factor = unit_keys[key]
            kwargs[name] = float(value) * factor
        else:
            raise ConfigError(f"unknown config key {key!r}")

    chain_keys = {
        "bc_budget": ("bc_budget", float), "price_per_mb": ("price_per_mb", float),
        "incentive_per_mb": ("incentive_per_mb", float), "r_min": ("r_min", int),
        "r_max": ("r_max", int), "block_txs": ("block_txs", int),
        "sig_cost_cycles": ("sig_cost_cycles", float),
        "verify_cost_cycles": ("verify_cost_cycles", float),
        "num_eins": ("num_eins", int), "num_faulty": ("num_faulty", int),
        "enabled": ("bc_enabled", bool), "queues_enabled": ("queues_enabled", bool),
    }
    for key, value in chain.items():
        if key == "node_cpus_ghz":
            kwargs["bc_node_cpus_hz"] = tuple(float(v) * GHZ for v in value)
        elif key in chain_keys:
            name, conv = chain_keys[key]
            kwargs[name] = conv(value)
        else:
            raise ConfigError(f"unknown [chain] key {key!r}")

    for key, value in tasks.items():
        if key == "input_mb":
            kwargs["input_range_mb"] = _range_pair(value, "tasks.input_mb")
        elif key == "software_mb":
            kwargs["software_range_mb"] = _range_pair(value, "tasks.software_mb")
        elif key == "load_gigacycles":
            kwargs["load_range_gc"] = _range_pair(value, "tasks.load_gigacycles")
        elif key == "preset":
            if value not in TASK_PRESETS:
                raise ConfigError(f"unknown task preset {value!r}")
            in_rng, sw_rng, ld_rng = TASK_PRESETS[value]
            kwargs["input_range_mb"] = in_rng
            kwargs["software_range_mb"] = sw_rng
            kwargs["load_range_gc"] = ld_rng
        else:
            raise ConfigError(f"unknown [tasks] key {key!r}")

    rl_keys = {
        "learning_rate": float, "discount": float, "eps_start": float,
        "eps_end": float, "eps_decay_frac": float, "replay_capacity": int,
        "batch_size": int, "target_sync": int, "input_dropout": float,
    }
    rl_kwargs = {}
    for key, value in rl.items():
        if key == "hidden_sizes":
            rl_kwargs["hidden_sizes"] = tuple(int(v) for v in value)
        elif key in rl_keys:
            rl_kwargs[key] = rl_keys[key](value)
        else:
            raise ConfigError(f"unknown [rl] key {key!r}")
    if rl_kwargs:
        kwargs["rl"] = RlParams(**rl_kwargs)

    if "transition" in requests:
        matrix = np.asarray(requests["transition"], dtype=float)
        kwargs["request_transition"] = tuple(tuple(row) for row in matrix)

    return SystemParams(**kwargs).validate()


def with_seed(params: SystemParams, seed: int) -> SystemParams:
    return replace(params, seed=int(seed))


def rng_state_to_jsonable(state):
    """Philox/PCG bit-generator state -> JSON-safe (uint64 arrays become int lists)."""
    if isinstance(state, dict):
        return {k: rng_state_to_jsonable(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__uints__": [int(v) for v in state]}
    if isinstance(state, (np.integer,)):
        return int(state)
    return state


def rng_state_from_jsonable(obj):
    if isinstance(obj, dict):
        if "__uints__" in obj:
            return np.array(obj["__uints__"], dtype=np.uint64)
        return {k: rng_state_from_jsonable(v) for k, v in obj.items()}
    return obj
