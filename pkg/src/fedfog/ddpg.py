"""Deterministic actor-critic agent for one fog cell.

The actor maps the flattened cell state to a raw action in [0, 1]^(3M)
(sigmoid output); the environment's sanitize_action projects it onto the
feasible set. The critic scores (state, raw action) pairs. Replay stores the
raw pre-projection actions so the critic's action gradient lives in the same
space the actor outputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .env import FogCellEnv, sanitize_action
from .nn import (AdamState, FlatWeights, adam_step, assign_from_flat, backward,
                 concat_flats, flatten_mlp, forward, init_mlp, mlp_params,
                 mlp_size)
from .replay import ReplayBuffer, Transition


@dataclass
class DdpgHyperParams:
    gamma: float = 0.9
    tau: float = 0.001
    replay_capacity: int = 20000
    batch_size: int = 64
    actor_lr: float = 0.001
    critic_lr: float = 0.0001
    noise_std: float = 0.2          # exploration noise at episode 1
    noise_decay: float = 0.995      # multiplicative, once per episode
    noise_floor: float = 0.01
    hidden: tuple[int, int] = (300, 100)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")


@dataclass
class EpisodeReport:
    total_reward: float
    mean_cost: float                # per-slot cell cost
    mean_delay: float
    mean_energy: float
    mean_critic_loss: float
    updates: int
    wall_time: float


class DdpgAgent:
    """Actor-critic learner with target networks and a replay ring."""

    def __init__(self, state_dim: int, action_dim: int,
                 hp: DdpgHyperParams | None = None, seed=0):
        self.hp = hp or DdpgHyperParams()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)
        h1, h2 = self.hp.hidden
        self.actor = init_mlp(self.rng, [state_dim, h1, h2, action_dim],
                              output_activation="sigmoid")
        self.critic = init_mlp(self.rng, [state_dim + action_dim, h1, h2, 1],
                               output_activation="linear")
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.for_params(mlp_params(self.actor),
                                              self.hp.actor_lr)
        self.critic_opt = AdamState.for_params(mlp_params(self.critic),
                                               self.hp.critic_lr)
        self.buffer = ReplayBuffer(self.hp.replay_capacity, state_dim, action_dim)
        self.noise_std = self.hp.noise_std

    def select_action(self, state: np.ndarray, explore: bool) -> np.ndarray:
        """Actor output plus Gaussian exploration noise, clipped to [0, 1]."""
        a, _ = forward(self.actor, state)
        if explore and self.noise_std > 0.0:
            a = a + self.rng.normal(0.0, self.noise_std, size=a.shape)
        return np.clip(a, 0.0, 1.0)

    def critic_update(self, batch: Transition) -> float:
        """Regress the critic onto bootstrapped targets; returns pre-step loss."""
        s, a, r, s2 = batch
        k = len(r)
        a2, _ = forward(self.target_actor, s2)
        q2, _ = forward(self.target_critic, np.hstack([s2, a2]))
        y = r[:, None] + self.hp.gamma * q2
        q, cache = forward(self.critic, np.hstack([s, a]))
        err = q - y
        loss = float(np.mean(err ** 2))
        grads, _ = backward(self.critic, cache, 2.0 * err / k)
        adam_step(mlp_params(self.critic), grads, self.critic_opt)
        return loss

    def actor_update(self, batch: Transition) -> float:
        """Ascend mean Q(s, actor(s)); returns the pre-step objective."""
        s = batch.state
        k = len(s)
        a, actor_cache = forward(self.actor, s)
        q, critic_cache = forward(self.critic, np.hstack([s, a]))
        objective = float(np.mean(q))
        # Only the critic's gradient w.r.t. its action inputs is used; its
        # parameters stay frozen during the actor step.
        _, input_grad = backward(self.critic, critic_cache,
                                 np.full_like(q, 1.0 / k))
        action_grad = input_grad[:, self.state_dim:]
        grads, _ = backward(self.actor, actor_cache, action_grad)
        adam_step(mlp_params(self.actor), [-g for g in grads], self.actor_opt)
        return objective

    def soft_update(self) -> None:
        """Geometric target tracking: theta' <- tau*theta + (1-tau)*theta'."""
        tau = self.hp.tau
        for target, online in ((self.target_actor, self.actor),
                               (self.target_critic, self.critic)):
            for tp, p in zip(mlp_params(target), mlp_params(online)):
                tp *= 1.0 - tau
                tp += tau * p

    def update_step(self) -> float | None:
        """One critic + actor + soft update from a sampled batch, if warm."""
        if len(self.buffer) < self.hp.batch_size:
            return None
        batch = self.buffer.sample(self.hp.batch_size, self.rng)
        loss = self.critic_update(batch)
        self.actor_update(batch)
        self.soft_update()
        return loss

    def end_episode(self) -> None:
        self.noise_std = max(self.hp.noise_floor,
                             self.noise_std * self.hp.noise_decay)

    def train_episode(self, env: FogCellEnv) -> EpisodeReport:
        """Run one episode with exploration, learning after every step."""
        t0 = time.perf_counter()
        state = env.reset()
        steps = env.config.steps_per_episode
        total_reward = 0.0
        cost = delay = energy = 0.0
        losses = []
        for _ in range(steps):
            s = env.flatten_state(state)
            raw = self.select_action(s, explore=True)
            reward, state = env.step(sanitize_action(raw))
            self.buffer.add(s, raw, reward, env.flatten_state(state))
            total_reward += reward
            cost += env.last_cost.cost
            delay += env.last_cost.total_delay
            energy += env.last_cost.total_energy
            loss = self.update_step()
            if loss is not None:
                losses.append(loss)
        self.end_episode()
        return EpisodeReport(total_reward, cost / steps, delay / steps,
                             energy / steps,
                             float(np.mean(losses)) if losses else float("nan"),
                             len(losses), time.perf_counter() - t0)

    def policy(self):
        """Frozen greedy policy suitable for rollout_episode()."""
        def act(env, state):
            raw = self.select_action(env.flatten_state(state), explore=False)
            return sanitize_action(raw)
        return act

    # Weight exchange: every network flattened in a fixed order.
    _EXPORT_ORDER = ("actor", "critic", "target_actor", "target_critic")

    def export_weights(self) -> FlatWeights:
        return concat_flats([flatten_mlp(getattr(self, name))
                             for name in self._EXPORT_ORDER])

    def _slices(self, flat: FlatWeights) -> list[np.ndarray]:
        sizes = [mlp_size(getattr(self, name)) for name in self._EXPORT_ORDER]
        if flat.values.size != sum(sizes):
            raise ValueError(f"weight vector has {flat.values.size} values, "
                             f"agent needs {sum(sizes)}")
        out, off = [], 0
        for size in sizes:
            out.append(flat.values[off:off + size])
            off += size
        return out

    def load_weights(self, flat: FlatWeights) -> None:
        """Restore every network exactly as exported (checkpoint restore)."""
        for name, values in zip(self._EXPORT_ORDER, self._slices(flat)):
            assign_from_flat(getattr(self, name), values)

    def load_global(self, flat: FlatWeights) -> None:
        """Adopt broadcast weights: online nets from their slices, targets
        re-synced to those same online weights."""
        slices = self._slices(flat)
        assign_from_flat(self.actor, slices[0])
        assign_from_flat(self.critic, slices[1])
        assign_from_flat(self.target_actor, slices[0])
        assign_from_flat(self.target_critic, slices[1])
