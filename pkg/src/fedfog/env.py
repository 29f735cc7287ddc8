"""Fog cell simulator: tasks, mobility, wireless uplink, and execution costs.

One environment instance models the cell of a single fog access point (FAP)
serving M mobile devices (MDs). Time advances in fixed slots. Each slot every
MD generates one task (bits to upload, CPU cycles to execute) that either runs
on the device or is offloaded in full over the shared uplink to the FAP.

Per-slot cost terms for device m:

    local:    delay  = cycles / f_md
              energy = xi * cycles,          xi = 1e-27 * f_md**2   (J/cycle)
    offload:  delay  = cycles / (y * f_fap) + bits / rate
              energy = p_tx * bits / rate
              rate   = z * B * log2(1 + p_tx * gain / noise)
              gain   = max(dist, 1 m) ** -alpha

y and z are the compute and bandwidth shares granted by the FAP; each group
sums to at most 1 across the cell. The slot cost is the weighted sum
w_delay * total_delay + w_energy * total_energy over all MDs, and the step
reward is the negated cost divided by M so reward magnitudes stay comparable
across cell sizes.

Downlink result delivery, FAP-side energy, and cross-slot task queueing are
deliberately not modeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BITS_PER_KB = 8000.0

# Distance clamp for the power-law channel gain; keeps SNR finite when an MD
# wanders arbitrarily close to the FAP.
D_MIN = 1.0

# Smallest compute/bandwidth share an offloaded MD may hold. The offload
# delay divides by y and z, so a zero share with an offload decision would be
# undefined; sanitize_action floors shares here before costs are evaluated.
EPS_ALLOC = 1e-3

# Slack for floating-point sums when checking the share-budget constraints.
_SUM_TOL = 1e-9


class ActionConstraintError(ValueError):
    """An action violates one of its structural constraints."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = constraint if not detail else f"{constraint}: {detail}"
        super().__init__(msg)


class EpisodeOverError(RuntimeError):
    """step() was called after the episode's final slot."""


def md_energy_coeff(cpu_freq: float) -> float:
    """Per-cycle switching energy of an MD chip running at `cpu_freq` Hz."""
    return 1e-27 * cpu_freq * cpu_freq


@dataclass
class EnvConfig:
    """Static parameters of the fog network and of one episode."""

    num_faps: int = 2
    mds_per_fap: int = 3
    cell_side: float = 200.0            # m, square cell per FAP
    bandwidth: float = 1e7              # Hz shared by the cell uplink
    fap_cpu: float = 5e9                # Hz
    md_cpu_range: tuple[float, float] = (1e9, 2e9)      # Hz, uniform draw
    md_power_range: tuple[float, float] = (0.1, 1.0)    # W, uniform draw
    noise_power: float = 1e-13          # W (-100 dBm)
    path_loss_alpha: float = 4.0
    task_bits_range: tuple[float, float] = (200.0 * BITS_PER_KB, 300.0 * BITS_PER_KB)
    cycles_per_bit_range: tuple[float, float] = (200.0, 500.0)
    weight_delay: float = 0.5
    weight_energy: float = 0.5
    slot_duration: float = 1.0          # s
    steps_per_episode: int = 50
    rng_seed: int = 0
    max_move_per_slot: float = 5.0      # m, uniform step length bound
    fap_antennas: int = 8               # larger than mds_per_fap; no cost term uses it

    def __post_init__(self):
        for name in ("cell_side", "bandwidth", "fap_cpu", "noise_power",
                     "path_loss_alpha", "slot_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("md_cpu_range", "md_power_range", "task_bits_range",
                     "cycles_per_bit_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or lo > hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max")
        if self.num_faps < 1:
            raise ValueError("num_faps must be >= 1")
        if self.mds_per_fap < 1:
            raise ValueError("mds_per_fap must be >= 1")
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        if self.max_move_per_slot < 0:
            raise ValueError("max_move_per_slot must be >= 0")
        if not 0.0 <= self.weight_delay <= 1.0:
            raise ValueError("weight_delay must lie in [0, 1]")
        if abs(self.weight_delay + self.weight_energy - 1.0) > 1e-9:
            raise ValueError("weight_delay + weight_energy must equal 1")

    @property
    def state_dim(self) -> int:
        return 5 * self.mds_per_fap + 2

    @property
    def action_dim(self) -> int:
        return 3 * self.mds_per_fap

    @property
    def max_task_bits(self) -> float:
        return self.task_bits_range[1]

    @property
    def max_task_cycles(self) -> float:
        return self.task_bits_range[1] * self.cycles_per_bit_range[1]


@dataclass
class TaskSpec:
    """One computation task: payload to move and work to execute."""

    bits: float
    cycles: float


@dataclass
class MobileDevice:
    id: int
    position: np.ndarray                # (2,) m
    cpu_freq: float                     # Hz
    tx_power: float                     # W
    energy_coeff: float                 # J/cycle, 1e-27 * cpu_freq**2


@dataclass
class FogAccessPoint:
    id: int
    position: np.ndarray                # (2,) m
    cpu_freq: float
    bandwidth: float
    devices: list[MobileDevice] = field(default_factory=list)


@dataclass
class SlotState:
    """Observable state of one cell at one slot; every vector has length M."""

    task_bits: np.ndarray
    task_cycles: np.ndarray
    fap_position: np.ndarray            # (2,)
    md_positions: np.ndarray            # (M, 2)
    channel_gains: np.ndarray

    @property
    def num_mds(self) -> int:
        return len(self.task_bits)


@dataclass
class ActionVector:
    """Joint offload decision plus compute/bandwidth shares for a cell."""

    offload: np.ndarray                 # (M,) in {0, 1}
    compute_share: np.ndarray           # (M,) in [0, 1]
    bandwidth_share: np.ndarray         # (M,) in [0, 1]

    def validate(self, eps: float = EPS_ALLOC) -> None:
        """Raise ActionConstraintError naming the first violated constraint."""
        m = len(self.offload)
        if len(self.compute_share) != m or len(self.bandwidth_share) != m:
            raise ActionConstraintError("length mismatch",
                                        "offload/compute/bandwidth differ")
        if not np.all((self.offload == 0) | (self.offload == 1)):
            raise ActionConstraintError("offload not binary")
        for name, share in (("compute_share", self.compute_share),
                            ("bandwidth_share", self.bandwidth_share)):
            if np.any(share < 0) or np.any(share > 1):
                raise ActionConstraintError(f"{name} outside [0, 1]")
            total = float(share.sum())
            if total > 1.0 + _SUM_TOL:
                raise ActionConstraintError(f"sum({name}) > 1", f"sum={total!r}")
            floor_ok = share[self.offload == 1] >= eps - 1e-15
            if not np.all(floor_ok):
                raise ActionConstraintError(
                    f"{name} below minimum share for an offloaded MD",
                    f"floor={eps}")

    def to_raw(self) -> np.ndarray:
        """Concatenated [x, y, z] vector in actor output order."""
        return np.concatenate([self.offload.astype(float),
                               self.compute_share, self.bandwidth_share])


@dataclass
class CostBreakdown:
    total_delay: float                  # s, summed over MDs
    total_energy: float                 # J, summed over MDs
    cost: float                         # weighted units
    per_md_delay: np.ndarray
    per_md_energy: np.ndarray


def channel_gain(md_pos: np.ndarray, fap_pos: np.ndarray, alpha: float) -> float:
    """Power-law gain max(dist, D_MIN)**-alpha between an MD and its FAP."""
    dist = float(np.hypot(md_pos[0] - fap_pos[0], md_pos[1] - fap_pos[1]))
    return max(dist, D_MIN) ** (-alpha)


def local_cost(task: TaskSpec, md: MobileDevice) -> tuple[float, float]:
    """Delay (s) and energy (J) of running `task` on the device itself."""
    delay = task.cycles / md.cpu_freq
    energy = md.energy_coeff * task.cycles
    return delay, energy


def uplink_rate(z: float, bandwidth: float, power: float, gain: float,
                noise_power: float) -> float:
    """Achievable uplink bit rate for a device holding bandwidth share z."""
    if z == 0.0:
        return 0.0
    return z * bandwidth * math.log2(1.0 + power * gain / noise_power)


def offload_cost(task: TaskSpec, md: MobileDevice, fap: FogAccessPoint,
                 y: float, z: float, gain: float, noise_power: float,
                 ) -> tuple[float, float]:
    """Delay and MD-side energy of offloading `task` with shares (y, z).

    Only the device's transmit energy is charged; FAP-side energy is not
    part of the cost model.
    """
    if y < EPS_ALLOC or z < EPS_ALLOC:
        raise ActionConstraintError("share below minimum for an offloaded MD",
                                    f"y={y!r} z={z!r}")
    rate = uplink_rate(z, fap.bandwidth, md.tx_power, gain, noise_power)
    tx_delay = task.bits / rate
    delay = task.cycles / (y * fap.cpu_freq) + tx_delay
    return delay, md.tx_power * tx_delay


def slot_cost(state: SlotState, action: ActionVector, fap: FogAccessPoint,
              config: EnvConfig) -> CostBreakdown:
    """Weighted delay-energy cost of the cell for one slot under `action`."""
    action.validate()
    m = state.num_mds
    if m != len(fap.devices):
        raise ActionConstraintError("length mismatch", "state vs fap devices")
    per_delay = np.zeros(m)
    per_energy = np.zeros(m)
    for i in range(m):
        task = TaskSpec(float(state.task_bits[i]), float(state.task_cycles[i]))
        md = fap.devices[i]
        if action.offload[i] == 0:
            d, e = local_cost(task, md)
        else:
            d, e = offload_cost(task, md, fap,
                                float(action.compute_share[i]),
                                float(action.bandwidth_share[i]),
                                float(state.channel_gains[i]),
                                config.noise_power)
        per_delay[i] = d
        per_energy[i] = e
    total_delay = float(per_delay.sum())
    total_energy = float(per_energy.sum())
    cost = config.weight_delay * total_delay + config.weight_energy * total_energy
    return CostBreakdown(total_delay, total_energy, cost, per_delay, per_energy)


def sanitize_action(raw: np.ndarray, eps: float = EPS_ALLOC) -> ActionVector:
    """Project a raw actor output in [0, 1]^(3M) onto the feasible action set.

    Offload decisions are thresholded at 0.5. Shares of non-offloaded MDs are
    zeroed; shares of offloaded MDs are floored at `eps` and, when a group's
    sum exceeds 1, the surplus above the floor is scaled down so the group
    sums to 1 while every offloaded MD keeps at least `eps`. The projection
    is idempotent.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size % 3 != 0 or raw.size == 0:
        raise ValueError(f"raw action must be a 1-D vector of 3M values, "
                         f"got shape {raw.shape}")
    m = raw.size // 3
    offload = (raw[:m] > 0.5).astype(int)
    mask = offload == 1
    k = int(mask.sum())
    shares = []
    for group in (raw[m:2 * m], raw[2 * m:]):
        s = np.where(mask, np.maximum(group, eps), 0.0)
        total = float(s.sum())
        if total > 1.0:
            if k * eps >= 1.0:
                raise ActionConstraintError(
                    "infeasible share floor",
                    f"{k} offloaded MDs at floor {eps} exceed the budget")
            # Rescale only the surplus above the floor: the floor survives
            # and the group lands exactly on the unit budget.
            s = np.where(mask, eps + (s - eps) * (1.0 - k * eps) / (total - k * eps), 0.0)
            excess = float(s.sum()) - 1.0
            while excess > 0.0:   # shave float residue off the largest share
                s[int(np.argmax(s))] -= excess
                excess = float(s.sum()) - 1.0
        shares.append(s)
    return ActionVector(offload, shares[0], shares[1])


def flatten_state(state: SlotState, config: EnvConfig) -> np.ndarray:
    """Normalized feature vector of length 5M + 2, every entry in [0, 1].

    Order: task bits, task cycles, FAP position, MD positions, channel gains.
    Bits and cycles are scaled by their configured maxima, positions by the
    cell side, and gains by the clamp-distance gain (their upper bound).
    """
    gain_scale = D_MIN ** config.path_loss_alpha
    return np.concatenate([
        state.task_bits / config.max_task_bits,
        state.task_cycles / config.max_task_cycles,
        state.fap_position / config.cell_side,
        state.md_positions.reshape(-1) / config.cell_side,
        state.channel_gains * gain_scale,
    ])


class FogCellEnv:
    """Episodic MDP view of one FAP cell.

    A single instance is owned by one agent and is not thread-safe; run one
    instance per FAP for a multi-cell system. All randomness (device draws,
    tasks, mobility) flows from the instance seed.
    """

    def __init__(self, config: EnvConfig, seed=None):
        self.config = config
        self._seed = config.rng_seed if seed is None else seed
        self._rng = np.random.default_rng(self._seed)
        self.fap = FogAccessPoint(
            id=0,
            position=np.array([config.cell_side / 2.0, config.cell_side / 2.0]),
            cpu_freq=config.fap_cpu,
            bandwidth=config.bandwidth,
        )
        self.state: SlotState | None = None
        self.last_cost: CostBreakdown | None = None
        self.t = 0

    @property
    def state_dim(self) -> int:
        return self.config.state_dim

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def reset(self, seed=None) -> SlotState:
        """Start a fresh episode; equal seeds reproduce it exactly.

        MD positions are re-drawn uniformly in the cell and each device's CPU
        frequency and transmit power are re-drawn once and held fixed for the
        whole episode.
        """
        if seed is not None:
            self._seed = seed
            self._rng = np.random.default_rng(seed)
        cfg = self.config
        m = cfg.mds_per_fap
        positions = self._rng.uniform(0.0, cfg.cell_side, size=(m, 2))
        cpu = self._rng.uniform(*cfg.md_cpu_range, size=m)
        power = self._rng.uniform(*cfg.md_power_range, size=m)
        self.fap.devices = [
            MobileDevice(i, positions[i].copy(), float(cpu[i]), float(power[i]),
                         md_energy_coeff(float(cpu[i])))
            for i in range(m)
        ]
        self.t = 0
        self.last_cost = None
        self.state = self._observe()
        return self.state

    def step(self, action: ActionVector) -> tuple[float, SlotState]:
        """Apply `action` to the current slot; return (reward, next state).

        The reward is -cost / M. Positions are frozen within the slot; MDs
        move and new tasks arrive only when the slot closes.
        """
        if self.state is None:
            raise EpisodeOverError("reset() must be called before step()")
        if self.t >= self.config.steps_per_episode:
            raise EpisodeOverError(
                f"episode is over after {self.config.steps_per_episode} steps")
        breakdown = slot_cost(self.state, action, self.fap, self.config)
        self.last_cost = breakdown
        reward = -breakdown.cost / self.config.mds_per_fap
        self._move_devices()
        self.t += 1
        self.state = self._observe()
        return reward, self.state

    def flatten_state(self, state: SlotState | None = None) -> np.ndarray:
        if state is None:
            state = self.state
        return flatten_state(state, self.config)

    def _observe(self) -> SlotState:
        """Draw fresh tasks and snapshot positions/gains for the new slot."""
        cfg = self.config
        m = cfg.mds_per_fap
        bits = self._rng.uniform(*cfg.task_bits_range, size=m)
        cpb = self._rng.uniform(*cfg.cycles_per_bit_range, size=m)
        positions = np.array([md.position for md in self.fap.devices])
        gains = np.array([
            channel_gain(md.position, self.fap.position, cfg.path_loss_alpha)
            for md in self.fap.devices
        ])
        return SlotState(bits, bits * cpb, self.fap.position.copy(),
                         positions, gains)

    def _move_devices(self) -> None:
        """Bounded random walk, reflected at the cell walls."""
        cfg = self.config
        m = cfg.mds_per_fap
        step_len = self._rng.uniform(0.0, cfg.max_move_per_slot, size=m)
        angle = self._rng.uniform(0.0, 2.0 * np.pi, size=m)
        for i, md in enumerate(self.fap.devices):
            md.position = _reflect(
                md.position + step_len[i] * np.array([np.cos(angle[i]),
                                                      np.sin(angle[i])]),
                cfg.cell_side)


def _reflect(pos: np.ndarray, side: float) -> np.ndarray:
    """Fold a point back into [0, side]^2 by mirror reflection."""
    period = 2.0 * side
    folded = np.mod(pos, period)
    return np.where(folded > side, period - folded, folded)


def rollout_episode(env: FogCellEnv, policy, reset_seed=None):
    """Run one full episode under `policy(env, state) -> ActionVector`.

    Returns (total_reward, mean_cost, mean_delay, mean_energy) where the
    means are per-slot averages of the cell totals.
    """
    state = env.reset(seed=reset_seed)
    steps = env.config.steps_per_episode
    total_reward = 0.0
    cost = delay = energy = 0.0
    for _ in range(steps):
        action = policy(env, state)
        reward, state = env.step(action)
        total_reward += reward
        cost += env.last_cost.cost
        delay += env.last_cost.total_delay
        energy += env.last_cost.total_energy
    return total_reward, cost / steps, delay / steps, energy / steps
