"""Value-based baseline agent over a discretized action catalog.

Each MD gets its own head of 51 Q-values: a dedicated local entry plus the
full binary-offload x 5 x 5 share-level product (levels k/5 for k in 1..5).
The 25 product entries with the offload bit clear duplicate local execution
once the sanitizer zeroes their shares; they are kept so the catalog
enumerates the whole product grid. A joint table over all MDs would explode
combinatorially, so the heads share one trunk (same hidden sizes as the
actor-critic agent) and each head bootstraps on the max of its own
next-state values; the heads are coupled only through the shared cell
reward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .ddpg import EpisodeReport
from .env import FogCellEnv, sanitize_action
from .nn import (AdamState, FlatWeights, adam_step, assign_from_flat, backward,
                 concat_flats, flatten_mlp, forward, init_mlp, mlp_params,
                 mlp_size)
from .replay import ReplayBuffer, Transition

SHARE_LEVELS = 5
_PAIRS = SHARE_LEVELS * SHARE_LEVELS
ACTIONS_PER_MD = 1 + 2 * _PAIRS     # local + {0,1} x 5 x 5 product


def decode_action(indices, num_mds: int) -> np.ndarray:
    """Map per-MD catalog indices to a raw [x, y, z] action vector.

    Index 0 is local execution. Index 1 + (i-1)*5 + (j-1) offloads with
    compute share i/5 and bandwidth share j/5; the block 25 higher carries
    the same share pair with the offload bit clear, which the sanitizer
    collapses to local execution. The result feeds sanitize_action, which
    enforces the share budgets.
    """
    indices = np.asarray(indices, dtype=int)
    if indices.shape != (num_mds,):
        raise ValueError(f"expected {num_mds} indices, got shape {indices.shape}")
    if np.any(indices < 0) or np.any(indices >= ACTIONS_PER_MD):
        raise ValueError(f"action index outside [0, {ACTIONS_PER_MD})")
    raw = np.zeros(3 * num_mds)
    for m, idx in enumerate(indices):
        if idx == 0:
            continue
        combo = idx - 1
        pair = combo % _PAIRS
        raw[m] = 1.0 if combo < _PAIRS else 0.0
        raw[num_mds + m] = (pair // SHARE_LEVELS + 1) / SHARE_LEVELS
        raw[2 * num_mds + m] = (pair % SHARE_LEVELS + 1) / SHARE_LEVELS
    return raw


@dataclass
class DqnHyperParams:
    gamma: float = 0.9
    replay_capacity: int = 20000
    batch_size: int = 64
    lr: float = 0.001
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995    # multiplicative, once per episode
    epsilon_floor: float = 0.05
    target_sync_period: int = 100   # learner steps between hard target syncs
    hidden: tuple[int, int] = (300, 100)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if self.target_sync_period < 1:
            raise ValueError("target_sync_period must be >= 1")


class DqnAgent:
    """Epsilon-greedy Q-learner with factorized per-MD action heads."""

    def __init__(self, state_dim: int, num_mds: int,
                 hp: DqnHyperParams | None = None, seed=0):
        self.hp = hp or DqnHyperParams()
        self.state_dim = state_dim
        self.num_mds = num_mds
        self.rng = np.random.default_rng(seed)
        h1, h2 = self.hp.hidden
        self.net = init_mlp(self.rng,
                            [state_dim, h1, h2, num_mds * ACTIONS_PER_MD],
                            output_activation="linear")
        self.target = self.net.copy()
        self.opt = AdamState.for_params(mlp_params(self.net), self.hp.lr)
        self.buffer = ReplayBuffer(self.hp.replay_capacity, state_dim, num_mds)
        self.epsilon = self.hp.epsilon_start
        self._updates = 0

    def _head_values(self, q: np.ndarray) -> np.ndarray:
        return q.reshape(*q.shape[:-1], self.num_mds, ACTIONS_PER_MD)

    def select(self, state: np.ndarray, epsilon: float) -> np.ndarray:
        """Per-head argmax, replaced by a uniform index with prob. epsilon.

        Ties resolve to the lowest index (np.argmax convention).
        """
        q, _ = forward(self.net, state)
        greedy = np.argmax(self._head_values(q), axis=-1)
        explore = self.rng.random(self.num_mds) < epsilon
        random_idx = self.rng.integers(0, ACTIONS_PER_MD, size=self.num_mds)
        return np.where(explore, random_idx, greedy)

    def td_update(self, batch: Transition) -> float:
        """One Adam step on the summed per-head TD errors; returns the loss."""
        s, a_idx, r, s2 = batch
        k = len(r)
        idx = a_idx.astype(int)
        q2, _ = forward(self.target, s2)
        next_best = self._head_values(q2).max(axis=-1)           # (k, M)
        y = r[:, None] + self.hp.gamma * next_best
        q, cache = forward(self.net, s)
        rows = np.arange(k)[:, None]
        cols = np.arange(self.num_mds)[None, :] * ACTIONS_PER_MD + idx
        taken = q[rows, cols]
        err = taken - y
        loss = float(np.mean(np.sum(err ** 2, axis=1)))
        grad_out = np.zeros_like(q)
        grad_out[rows, cols] = 2.0 * err / k
        if not np.all(np.isfinite(loss)):
            raise FloatingPointError("non-finite TD loss")
        grads, _ = backward(self.net, cache, grad_out)
        adam_step(mlp_params(self.net), grads, self.opt)
        self._updates += 1
        if self._updates % self.hp.target_sync_period == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        for tp, p in zip(mlp_params(self.target), mlp_params(self.net)):
            tp[...] = p

    def end_episode(self) -> None:
        self.epsilon = max(self.hp.epsilon_floor,
                           self.epsilon * self.hp.epsilon_decay)

    def train_episode(self, env: FogCellEnv) -> EpisodeReport:
        t0 = time.perf_counter()
        state = env.reset()
        steps = env.config.steps_per_episode
        total_reward = 0.0
        cost = delay = energy = 0.0
        losses = []
        for _ in range(steps):
            s = env.flatten_state(state)
            indices = self.select(s, self.epsilon)
            raw = decode_action(indices, self.num_mds)
            reward, state = env.step(sanitize_action(raw))
            self.buffer.add(s, indices.astype(float), reward,
                            env.flatten_state(state))
            total_reward += reward
            cost += env.last_cost.cost
            delay += env.last_cost.total_delay
            energy += env.last_cost.total_energy
            if len(self.buffer) >= self.hp.batch_size:
                losses.append(self.td_update(
                    self.buffer.sample(self.hp.batch_size, self.rng)))
        self.end_episode()
        return EpisodeReport(total_reward, cost / steps, delay / steps,
                             energy / steps,
                             float(np.mean(losses)) if losses else float("nan"),
                             len(losses), time.perf_counter() - t0)

    def policy(self):
        """Frozen greedy policy suitable for rollout_episode()."""
        def act(env, state):
            indices = self.select(env.flatten_state(state), epsilon=0.0)
            return sanitize_action(decode_action(indices, self.num_mds))
        return act

    _EXPORT_ORDER = ("net", "target")

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
        for name, values in zip(self._EXPORT_ORDER, self._slices(flat)):
            assign_from_flat(getattr(self, name), values)

    def load_global(self, flat: FlatWeights) -> None:
        """Adopt broadcast weights; the target re-syncs to the online net."""
        slices = self._slices(flat)
        assign_from_flat(self.net, slices[0])
        assign_from_flat(self.target, slices[0])
