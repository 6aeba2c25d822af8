"""
Small dense network engine: sequential stacks of fully connected layers with
analytic gradients, heavy-ball SGD and a flat binary parameter snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

ACTIVATIONS = ("relu", "linear", "sigmoid")

_SNAPSHOT_END = b"\n...\n"


class ShapeError(ValueError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"
    l2: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"weights {self.weights.shape} and bias {self.bias.shape} disagree")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]


@dataclass
class LayerCache:
    inputs: np.ndarray
    outputs: np.ndarray


def _activate(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        # split by sign so large |a| never overflows
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return a


def _activation_grad(kind: str, out: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return upstream * (out > 0.0)
    if kind == "sigmoid":
        return upstream * out * (1.0 - out)
    return upstream


def forward(layers: Sequence[DenseLayer], x: np.ndarray) -> tuple[np.ndarray, list[LayerCache]]:
    """Run ``x`` (n, in) through ``layers``; the cache feeds :func:`backward`."""
    h = np.asarray(x, dtype=np.float64)
    cache = []
    for i, layer in enumerate(layers):
        if h.ndim != 2 or h.shape[1] != layer.n_in:
            raise ShapeError(f"layer {i} expects {layer.n_in} inputs, got shape {h.shape}")
        out = _activate(layer.activation, h @ layer.weights.T + layer.bias)
        cache.append(LayerCache(h, out))
        h = out
    return h, cache


def backward(
    layers: Sequence[DenseLayer], cache: Sequence[LayerCache], upstream: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """
    Backpropagate ``upstream`` (dLoss/doutput) through a stack.

    Returns per-layer ``(dW, db)`` in layer order and dLoss/dinput.
    """
    if len(cache) != len(layers):
        raise ShapeError(f"cache has {len(cache)} entries for {len(layers)} layers")
    grad = np.asarray(upstream, dtype=np.float64)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        layer, c = layers[i], cache[i]
        if c.outputs.shape[1] != layer.n_out or c.inputs.shape[1] != layer.n_in:
            raise ShapeError(f"stale cache for layer {i}")
        if grad.shape != c.outputs.shape:
            raise ShapeError(f"layer {i}: upstream {grad.shape} vs output {c.outputs.shape}")
        delta = _activation_grad(layer.activation, c.outputs, grad)
        grads[i] = (delta.T @ c.inputs, delta.sum(axis=0))
        grad = delta @ layer.weights
    return grads, grad


def init_layer(n_in: int, n_out: int, activation: str = "relu", seed=0) -> DenseLayer:
    """Glorot-uniform weights, zero bias. ``seed`` may be an int or a Generator."""
    if n_in < 1 or n_out < 1:
        raise ValueError("layer dimensions must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_out, n_in))
    return DenseLayer(w, np.zeros(n_out), activation)


def init_stack(sizes: Sequence[int], activations: Sequence[str], rng) -> list[DenseLayer]:
    return [init_layer(a, b, act, rng) for a, b, act in zip(sizes[:-1], sizes[1:], activations)]


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)


def sgd_step(state: OptimizerState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """Heavy-ball update in place: ``v = mu*v - lr*g; p += v``."""
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ShapeError("params, grads and velocity lengths differ")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        v *= state.momentum
        v -= state.learning_rate * g
        p += v


# snapshots ---------------------------------------------------------------------

def save_arrays(path, arrays: Sequence[np.ndarray], meta: dict | None = None) -> None:
    """
    Write a YAML shape manifest, a ``...`` end marker and the arrays as flat
    little-endian float64.
    """
    manifest = dict(meta or {})
    manifest["dtype"] = "<f8"
    manifest["shapes"] = [list(a.shape) for a in arrays]
    head = yaml.safe_dump(manifest, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    Path(path).write_bytes(head.rstrip(b"\n") + _SNAPSHOT_END + body)


def load_arrays(path) -> tuple[list[np.ndarray], dict]:
    raw = Path(path).read_bytes()
    cut = raw.find(_SNAPSHOT_END)
    if cut < 0:
        raise ValueError(f"{path}: no manifest terminator")
    manifest = yaml.safe_load(raw[:cut].decode("utf-8"))
    body = raw[cut + len(_SNAPSHOT_END):]
    arrays, offset = [], 0
    for shape in manifest["shapes"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64))
        offset += 8 * count
    if offset != len(body):
        raise ValueError(f"{path}: {len(body) - offset} trailing bytes after parameters")
    return arrays, manifest


def save_layers(path, layers: Sequence[DenseLayer]) -> None:
    save_arrays(path, [p for l in layers for p in l.params()], {"activations": [l.activation for l in layers]})


def load_layers(path) -> list[DenseLayer]:
    arrays, manifest = load_arrays(path)
    acts = manifest["activations"]
    return [DenseLayer(arrays[2 * i], arrays[2 * i + 1], a) for i, a in enumerate(acts)]
