"""Dense networks with hand-derived backprop, Adam, and flat-weight I/O.

Fixed-topology MLPs are all the agents need, so there is no autograd graph:
forward caches layer inputs and pre-activations, backward replays the chain
rule exactly. Everything is float64; the nets are tiny and determinism plus
gradient-check headroom matter more than speed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "linear")

_CKPT_MAGIC = b"FWCK"
_CKPT_VERSION = 1


@dataclass
class Mlp:
    """Per-layer weights (in, out), biases (out,), and activation names."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases],
                   list(self.activations))


@dataclass
class AdamState:
    """Adam moments for one parameter list, in mlp_params() order."""

    lr: float
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float) -> "AdamState":
        return cls(lr=lr,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


@dataclass
class FlatWeights:
    """All parameters of one or more networks as a single f64 vector.

    `shapes` and `offsets` describe where each array lives in `values`;
    `activations` records the layer activations so an Mlp round-trips.
    """

    values: np.ndarray
    shapes: list[tuple[int, ...]]
    offsets: list[int]
    activations: list[str] = field(default_factory=list)

    def layout(self) -> tuple:
        return (tuple(self.shapes), tuple(self.offsets), tuple(self.activations))

    def layout_hash(self) -> str:
        blob = json.dumps([list(map(list, self.shapes)), self.offsets,
                           self.activations]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def init_mlp(rng, dims: list[int], output_activation: str = "linear",
             hidden_activation: str = "relu") -> Mlp:
    """He-uniform initialized MLP; biases start at zero.

    A sigmoid output layer is scaled down by 10x so initial outputs sit near
    0.5 rather than saturating, which keeps early actions inside the share
    budget instead of slamming against it.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    for act in (hidden_activation, output_activation):
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    weights, biases, acts = [], [], []
    n_layers = len(dims) - 1
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / fan_in)
        act = output_activation if i == n_layers - 1 else hidden_activation
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if i == n_layers - 1 and act == "sigmoid":
            w *= 0.1
        weights.append(w)
        biases.append(np.zeros(fan_out))
        acts.append(act)
    return Mlp(weights, biases, acts)


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def forward(net: Mlp, x: np.ndarray):
    """Run the network; returns (output, cache) with cache feeding backward().

    Accepts a single input (1-D) or a batch (2-D, samples in rows); the
    output matches the input's rank.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.input_dim:
        raise ValueError(f"input width {h.shape[1]} does not match "
                         f"network input dim {net.input_dim}")
    inputs, zs, outs = [], [], []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + b
        zs.append(z)
        h = _apply_activation(act, z)
        outs.append(h)
    cache = {"inputs": inputs, "zs": zs, "outs": outs, "single": single}
    return (h[0] if single else h), cache


def backward(net: Mlp, cache, output_grad: np.ndarray):
    """Exact gradients of a scalar loss given dL/d(output).

    Returns (param_grads, input_grad) with param_grads in mlp_params() order
    [W0, b0, W1, b1, ...]. `output_grad` must carry any batch averaging; the
    parameter gradients are summed over the batch rows.
    """
    g = np.asarray(output_grad, dtype=float)
    if cache["single"]:
        g = g[None, :]
    if g.shape != cache["zs"][-1].shape:
        raise ValueError("output_grad shape does not match the cached forward")
    if len(cache["zs"]) != len(net.weights) or any(
            z.shape[1] != w.shape[1] for z, w in zip(cache["zs"], net.weights)):
        raise ValueError("cache does not match this network")
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        dz = g * _activation_grad(net.activations[i], cache["zs"][i],
                                  cache["outs"][i])
        grads[2 * i] = cache["inputs"][i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ net.weights[i].T
    input_grad = g[0] if cache["single"] else g
    return grads, input_grad


def mlp_params(net: Mlp) -> list[np.ndarray]:
    """Live parameter arrays in the order backward() reports gradients."""
    params = []
    for w, b in zip(net.weights, net.biases):
        params.extend((w, b))
    return params


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place on `params`."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state lengths differ")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def flatten_mlp(net: Mlp) -> FlatWeights:
    """Pack weights and biases (layer order, W before b) into one vector."""
    arrays = mlp_params(net)
    shapes = [a.shape for a in arrays]
    offsets = []
    off = 0
    for a in arrays:
        offsets.append(off)
        off += a.size
    values = np.concatenate([a.reshape(-1) for a in arrays]) if arrays else np.zeros(0)
    return FlatWeights(values, shapes, offsets, list(net.activations))


def unflatten_mlp(flat: FlatWeights) -> Mlp:
    """Inverse of flatten_mlp; bit-exact round trip."""
    if len(flat.shapes) != 2 * len(flat.activations):
        raise ValueError("layout does not describe an MLP "
                         "(need one weight and one bias per layer)")
    arrays = _split_arrays(flat)
    weights = arrays[0::2]
    biases = arrays[1::2]
    for w, b in zip(weights, biases):
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError("layout shapes are not MLP layer shapes")
    return Mlp(weights, biases, list(flat.activations))


def _split_arrays(flat: FlatWeights) -> list[np.ndarray]:
    arrays = []
    for shape, off in zip(flat.shapes, flat.offsets):
        size = int(np.prod(shape)) if shape else 1
        if off + size > flat.values.size:
            raise ValueError("layout exceeds the value vector")
        arrays.append(flat.values[off:off + size].reshape(shape).copy())
    return arrays


def concat_flats(flats: list[FlatWeights]) -> FlatWeights:
    """Join several FlatWeights into one (e.g. every network of an agent)."""
    values = np.concatenate([f.values for f in flats])
    shapes, offsets, acts = [], [], []
    base = 0
    for f in flats:
        shapes.extend(f.shapes)
        offsets.extend(off + base for off in f.offsets)
        acts.extend(f.activations)
        base += f.values.size
    return FlatWeights(values, shapes, offsets, acts)


def assign_from_flat(net: Mlp, values: np.ndarray) -> None:
    """Overwrite `net`'s parameters from a flat slice in flatten order."""
    off = 0
    for p in mlp_params(net):
        p[...] = values[off:off + p.size].reshape(p.shape)
        off += p.size
    if off != values.size:
        raise ValueError(f"flat slice has {values.size} values, "
                         f"network needs {off}")


def mlp_size(net: Mlp) -> int:
    return sum(p.size for p in mlp_params(net))


def save_checkpoint(path, flat: FlatWeights, meta: dict | None = None) -> None:
    """Write layout header (JSON) plus the raw little-endian f64 values."""
    header = {
        "shapes": [list(s) for s in flat.shapes],
        "offsets": list(flat.offsets),
        "activations": list(flat.activations),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", flat.values.size))
        fh.write(flat.values.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[FlatWeights, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path} is not a weight checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        (count,) = struct.unpack("<Q", fh.read(8))
        values = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(float)
    if values.size != count:
        raise ValueError("checkpoint truncated")
    flat = FlatWeights(values,
                       [tuple(s) for s in header["shapes"]],
                       list(header["offsets"]),
                       list(header["activations"]))
    return flat, header.get("meta", {})
