"""Redundancy-aware blockchain-based partial computation offloading: a
deterministic slot simulator, a decentralized offloading game solver, and a
DDQN agent learning the chain redundancy policy."""

from .agent import (BrfAction, EncodedState, RedundancyAgent, ReplayMemory,
                    Transition, encode_state, infer_policy, optimal_action,
                    sample_feasible_action, slot_reward, td_target,
                    train_epoch)
from .chain import (ConsensusCost, RedundancyProfile, Violation, bc_spend,
                    check_redundancy, consensus_latency, mining_incentive)
from .config import (ConfigError, RlParams, RngStream, SubtaskSpec,
                     SystemParams, load_config, sample_tasks, step_requests,
                     uniform_transition, with_seed)
from .costs import (EIN, FIN, LOCAL, ExecutionCost, QueueState, ein_cost,
                    fin_cost, local_cost, queue_delay, slot_cost)
from .game import (DecisionProfile, GameOutcome, best_response,
                   convergence_bound, init_profile, make_instance, potential,
                   run_to_ne)
from .harness import (POLICIES, Environment, emit_csv, read_csv,
                      run_experiment, run_slot, run_sweep)
from .qnet import (Network, forward, huber_loss, init_network, load_checkpoint,
                   q_value, save_checkpoint, sync_target, train_step)
from .radio import (ChannelState, channel_gain, interference,
                    interference_threshold, uplink_rate)

__version__ = "0.1.0"
