"""Synchronous federated training across per-FAP agents.

Each round every agent downloads the global weights, trains locally on its
own cell, and uploads its weights; the coordinator element-wise averages the
uploads and broadcasts the result. Only flat weight vectors ever cross the
agent boundary: transitions, states, and task data stay local, and so do the
optimizer moments and replay buffers (averaging moments across agents has no
sound interpretation, and clearing replay every round would throw away nearly
all experience).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ddpg import DdpgAgent, DdpgHyperParams
from .dqn import DqnAgent, DqnHyperParams
from .env import EnvConfig, FogCellEnv, rollout_episode
from .nn import FlatWeights, load_checkpoint, save_checkpoint

AGENT_KINDS = ("ddpg", "dqn")


@dataclass
class GlobalModel:
    weights: FlatWeights
    round_index: int
    agent_kind: str


@dataclass
class RoundReport:
    round_index: int
    episode_rewards: list[float]        # one entry per FAP
    mean_reward: float                  # mean per-step system reward
    mean_cost: float
    mean_delay: float
    mean_energy: float
    eval_cost: float = float("nan")     # frozen-policy cost, when evaluated
    wall_time: float = 0.0


@dataclass
class TrainingResult:
    reports: list[RoundReport]
    global_model: GlobalModel
    agents: list = field(default_factory=list)
    envs: list = field(default_factory=list)


def federated_average(uploads: list[FlatWeights]) -> FlatWeights:
    """Element-wise arithmetic mean of identically laid out weight vectors."""
    if not uploads:
        raise ValueError("cannot average zero uploads")
    layout = uploads[0].layout()
    for flat in uploads[1:]:
        if flat.layout() != layout or flat.values.size != uploads[0].values.size:
            raise ValueError("upload layouts differ; agents are incompatible")
    first = uploads[0]
    # baseline-shifted mean: exact (bit-identical) when all uploads agree,
    # which a naive sum/N is not for N != 2^k
    base = first.values
    deltas = np.stack([f.values - base for f in uploads])
    mean = base + np.mean(deltas, axis=0)
    return FlatWeights(mean, list(first.shapes), list(first.offsets),
                       list(first.activations))


def _spawn_seeds(master_seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(n)


def build_agent(kind: str, env_cfg: EnvConfig, seed,
                ddpg_hp: DdpgHyperParams | None = None,
                dqn_hp: DqnHyperParams | None = None):
    if kind == "ddpg":
        return DdpgAgent(env_cfg.state_dim, env_cfg.action_dim,
                         hp=ddpg_hp, seed=seed)
    if kind == "dqn":
        return DqnAgent(env_cfg.state_dim, env_cfg.mds_per_fap,
                        hp=dqn_hp, seed=seed)
    raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")


def make_eval_envs(env_cfg: EnvConfig, seed: int) -> list[FogCellEnv]:
    """Held-out evaluation envs, one per FAP.

    Seeded from the same spawn layout as setup_federation so every policy
    evaluated under a given master seed sees the same episode draws.
    """
    n = env_cfg.num_faps
    seeds = _spawn_seeds(seed, 3 * n + 1)
    return [FogCellEnv(env_cfg, seed=seeds[1 + 2 * n + i]) for i in range(n)]


def setup_federation(env_cfg: EnvConfig, agent_kind: str, seed: int,
                     ddpg_hp: DdpgHyperParams | None = None,
                     dqn_hp: DqnHyperParams | None = None):
    """Create one env + agent per FAP plus the shared initial global model.

    All randomness derives from `seed`; the agents start from identical
    weights (the dedicated init stream), as the protocol requires.
    """
    n = env_cfg.num_faps
    seeds = _spawn_seeds(seed, 3 * n + 1)
    init_agent = build_agent(agent_kind, env_cfg, seeds[0], ddpg_hp, dqn_hp)
    global_model = GlobalModel(init_agent.export_weights(), 0, agent_kind)
    envs = [FogCellEnv(env_cfg, seed=seeds[1 + i]) for i in range(n)]
    agents = [build_agent(agent_kind, env_cfg, seeds[1 + n + i], ddpg_hp, dqn_hp)
              for i in range(n)]
    eval_envs = [FogCellEnv(env_cfg, seed=seeds[1 + 2 * n + i]) for i in range(n)]
    return agents, envs, eval_envs, global_model


def run_round(agents, envs, global_model: GlobalModel,
              episodes_per_round: int = 1) -> tuple[GlobalModel, RoundReport]:
    """One synchronous round: broadcast, local training, collect, average.

    Any agent failure propagates and aborts the whole round.
    """
    t0 = time.perf_counter()
    for agent in agents:
        agent.load_global(global_model.weights)
    rewards, costs, delays, energies = [], [], [], []
    for agent, env in zip(agents, envs):
        agent_rewards = []
        for _ in range(episodes_per_round):
            report = agent.train_episode(env)
            agent_rewards.append(report.total_reward)
            costs.append(report.mean_cost)
            delays.append(report.mean_delay)
            energies.append(report.mean_energy)
        rewards.append(float(np.mean(agent_rewards)))
    uploads = [agent.export_weights() for agent in agents]
    averaged = federated_average(uploads)
    steps = envs[0].config.steps_per_episode
    new_model = GlobalModel(averaged, global_model.round_index + 1,
                            global_model.agent_kind)
    report = RoundReport(
        round_index=new_model.round_index,
        episode_rewards=rewards,
        mean_reward=float(np.mean(rewards)) / steps,
        mean_cost=float(np.mean(costs)),
        mean_delay=float(np.mean(delays)),
        mean_energy=float(np.mean(energies)),
        wall_time=time.perf_counter() - t0,
    )
    return new_model, report


def run_training(env_cfg: EnvConfig, agent_kind: str, seed: int, rounds: int,
                 episodes_per_round: int = 1,
                 ddpg_hp: DdpgHyperParams | None = None,
                 dqn_hp: DqnHyperParams | None = None,
                 eval_last_rounds: int = 0,
                 eval_episodes: int = 1,
                 checkpoint_dir=None,
                 checkpoint_every: int = 0) -> TrainingResult:
    """Full federated run: `rounds` rounds of run_round from a fresh setup.

    When episodes_per_round is 0 every round is a pure broadcast/average
    cycle and the global weights are unchanged. During the final
    `eval_last_rounds` rounds the freshly averaged global policy is also
    evaluated greedily on held-out episodes and recorded as eval_cost.
    With a checkpoint_dir the final global model is always written; setting
    checkpoint_every > 0 additionally snapshots every k-th round.
    """
    agents, envs, eval_envs, model = setup_federation(
        env_cfg, agent_kind, seed, ddpg_hp, dqn_hp)
    reports = []
    for j in range(rounds):
        if episodes_per_round == 0:
            for agent in agents:
                agent.load_global(model.weights)
            uploads = [agent.export_weights() for agent in agents]
            model = GlobalModel(federated_average(uploads), j + 1, agent_kind)
            reports.append(RoundReport(j + 1, [0.0] * len(agents),
                                       0.0, 0.0, 0.0, 0.0))
            continue
        model, report = run_round(agents, envs, model, episodes_per_round)
        if eval_last_rounds and j >= rounds - eval_last_rounds:
            metrics = evaluate_global(model, env_cfg, eval_envs,
                                      eval_episodes, ddpg_hp, dqn_hp)
            report.eval_cost = metrics[1]
        reports.append(report)
        if checkpoint_dir is not None and checkpoint_every > 0 \
                and (j + 1) % checkpoint_every == 0:
            _write_checkpoint(checkpoint_dir, model)
    if checkpoint_dir is not None:
        _write_checkpoint(checkpoint_dir, model)
    return TrainingResult(reports, model, agents, envs)


def _write_checkpoint(checkpoint_dir, model: GlobalModel) -> None:
    import os
    os.makedirs(checkpoint_dir, exist_ok=True)
    name = f"{model.agent_kind}-round{model.round_index:05d}.ckpt"
    save_round_checkpoint(os.path.join(checkpoint_dir, name), model)


def evaluate_policy(policy, eval_envs, episodes: int = 1):
    """Frozen-policy metrics over held-out episodes on every eval env.

    Returns (mean per-step reward, mean cost, mean delay, mean energy),
    each averaged per-slot and then across episodes.
    """
    rewards, costs, delays, energies = [], [], [], []
    for env in eval_envs:
        steps = env.config.steps_per_episode
        for _ in range(episodes):
            total, cost, delay, energy = rollout_episode(env, policy)
            rewards.append(total / steps)
            costs.append(cost)
            delays.append(delay)
            energies.append(energy)
    return (float(np.mean(rewards)), float(np.mean(costs)),
            float(np.mean(delays)), float(np.mean(energies)))


def evaluate_global(model: GlobalModel, env_cfg: EnvConfig, eval_envs,
                    episodes: int = 1,
                    ddpg_hp: DdpgHyperParams | None = None,
                    dqn_hp: DqnHyperParams | None = None):
    """evaluate_policy for the greedy policy of a global model."""
    agent = build_agent(model.agent_kind, env_cfg, 0, ddpg_hp, dqn_hp)
    agent.load_global(model.weights)
    return evaluate_policy(agent.policy(), eval_envs, episodes)


def save_round_checkpoint(path, model: GlobalModel) -> None:
    """Persist a global model with its round header."""
    save_checkpoint(path, model.weights, meta={
        "round": model.round_index,
        "agent_kind": model.agent_kind,
        "layout_hash": model.weights.layout_hash(),
    })


def load_round_checkpoint(path) -> GlobalModel:
    flat, meta = load_checkpoint(path)
    if meta.get("layout_hash") and meta["layout_hash"] != flat.layout_hash():
        raise ValueError("checkpoint layout hash mismatch")
    return GlobalModel(flat, int(meta.get("round", 0)),
                       str(meta.get("agent_kind", "ddpg")))
