"""Non-learning reference policies and an exact per-slot optimizer.

For a fixed offload set the slot cost splits into two independent problems of
the form

    minimize sum_m a_m / y_m   subject to  sum_m y_m <= 1,  y_m > 0,

whose Lagrangian optimum is y_m proportional to sqrt(a_m) with the budget
fully spent, giving objective (sum_m sqrt(a_m))^2. Enumerating the 2^M
offload sets and applying that closed form to the compute and bandwidth
groups therefore solves the joint slot problem exactly; at small M this is
the ground truth every policy can be measured against.
"""

from __future__ import annotations

import math

import numpy as np

from .env import (ActionVector, EnvConfig, EPS_ALLOC, FogAccessPoint,
                  SlotState, local_cost, sanitize_action, TaskSpec)

ORACLE_MAX_MDS = 12     # 2^M enumeration budget


def local_policy(state: SlotState) -> ActionVector:
    """Every task runs on its own device; no shares are granted."""
    m = state.num_mds
    return ActionVector(np.zeros(m, dtype=int), np.zeros(m), np.zeros(m))


def equal_policy(state: SlotState) -> ActionVector:
    """Every task is offloaded and both budgets are split evenly."""
    m = state.num_mds
    share = np.full(m, 1.0 / m)
    return ActionVector(np.ones(m, dtype=int), share, share.copy())


def closed_form_allocation(weights) -> np.ndarray:
    """Shares minimizing sum(w/y) on the unit simplex: y_m ~ sqrt(w_m)."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        return np.zeros(0)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("allocation weights must be positive and finite")
    root = np.sqrt(w)
    return root / root.sum()


def _allocation_weights(state: SlotState, fap: FogAccessPoint,
                        config: EnvConfig):
    """Per-MD weights of the two share problems, plus local costs.

    compute weight   w_delay * cycles / f_fap
    bandwidth weight (w_delay + w_energy * p_tx) * bits / full_band_rate
    """
    m = state.num_mds
    wd, we = config.weight_delay, config.weight_energy
    local = np.zeros(m)
    a_compute = np.zeros(m)
    a_bandwidth = np.zeros(m)
    for i in range(m):
        md = fap.devices[i]
        task = TaskSpec(float(state.task_bits[i]), float(state.task_cycles[i]))
        d, e = local_cost(task, md)
        local[i] = wd * d + we * e
        a_compute[i] = wd * task.cycles / fap.cpu_freq
        full_rate = fap.bandwidth * math.log2(
            1.0 + md.tx_power * float(state.channel_gains[i]) / config.noise_power)
        a_bandwidth[i] = (wd + we * md.tx_power) * task.bits / full_rate
    return local, a_compute, a_bandwidth


def oracle_slot_optimum(state: SlotState, fap: FogAccessPoint,
                        config: EnvConfig) -> tuple[ActionVector, float]:
    """Exact minimizer of the slot cost over offload sets and shares.

    Enumerates every offload subset and uses the closed-form share split for
    each; the share floor used by sanitize_action is not imposed here, so the
    returned cost is the unconstrained-split optimum (the floor gap is far
    below any comparison tolerance at the instance sizes this handles).
    """
    m = state.num_mds
    if m > ORACLE_MAX_MDS:
        raise ValueError(f"oracle enumerates 2^M subsets; M={m} exceeds "
                         f"the budget of {ORACLE_MAX_MDS}")
    local, a_compute, a_bandwidth = _allocation_weights(state, fap, config)
    best_cost = math.inf
    best_mask = 0
    for mask in range(1 << m):
        cost = 0.0
        sq_compute = 0.0
        sq_bandwidth = 0.0
        for i in range(m):
            if mask >> i & 1:
                sq_compute += math.sqrt(a_compute[i])
                sq_bandwidth += math.sqrt(a_bandwidth[i])
            else:
                cost += local[i]
        cost += sq_compute ** 2 + sq_bandwidth ** 2
        if cost < best_cost:
            best_cost = cost
            best_mask = mask
    offload = np.array([(best_mask >> i) & 1 for i in range(m)], dtype=int)
    y = np.zeros(m)
    z = np.zeros(m)
    chosen = offload == 1
    if chosen.any():
        y[chosen] = closed_form_allocation(a_compute[chosen])
        z[chosen] = closed_form_allocation(a_bandwidth[chosen])
    return ActionVector(offload, y, z), best_cost


def oracle_policy(env, state: SlotState) -> ActionVector:
    """Per-slot optimum as a rollout policy.

    The optimal shares are passed through sanitize_action so they respect the
    environment's share floor; the perturbation is negligible.
    """
    action, _ = oracle_slot_optimum(state, env.fap, env.config)
    return sanitize_action(action.to_raw(), eps=EPS_ALLOC)
