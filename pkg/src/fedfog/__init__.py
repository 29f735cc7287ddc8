"""Federated deep reinforcement learning for fog-network task offloading.

A discrete-time simulator of fog access points serving mobile devices, two
from-scratch DRL agents (deterministic actor-critic and a discretized
Q-learner), closed-form baselines with a per-slot exhaustive oracle, a
synchronous federated-averaging coordinator, and a seeded experiment harness
with a CLI. numpy is the only numerical dependency.
"""

from .baselines import (closed_form_allocation, equal_policy, local_policy,
                        oracle_policy, oracle_slot_optimum)
from .ddpg import DdpgAgent, DdpgHyperParams, EpisodeReport
from .dqn import DqnAgent, DqnHyperParams, decode_action
from .env import (ActionConstraintError, ActionVector, CostBreakdown,
                  EnvConfig, EpisodeOverError, FogAccessPoint, FogCellEnv,
                  MobileDevice, SlotState, TaskSpec, channel_gain,
                  flatten_state, local_cost, md_energy_coeff, offload_cost,
                  rollout_episode, sanitize_action, slot_cost, uplink_rate)
from .federated import (GlobalModel, RoundReport, TrainingResult,
                        evaluate_global, evaluate_policy, federated_average,
                        load_round_checkpoint, make_eval_envs, run_round,
                        run_training, save_round_checkpoint, setup_federation)
from .harness import (ExperimentConfig, ExperimentResult, convergence_run,
                      load_config, run_experiment, sweep_fap_cpu, sweep_mds)
from .nn import (AdamState, FlatWeights, Mlp, adam_step, backward,
                 concat_flats, flatten_mlp, forward, init_mlp,
                 load_checkpoint, save_checkpoint, unflatten_mlp)
from .replay import ReplayBuffer, Transition

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
