"""
TARNet, Dragonnet and BCAUSS estimators, each either unconstrained or with
causal-graph constrained (CGC) pre-representation layers.

In CGC mode every variable group gets its own trunk that only sees the
group's columns; trunk outputs are concatenated and mapped to the
representation by a single linear layer, so the representation is a sum of
group-local functions.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import _kernels, nn
from .graph import VariableGrouping

KINDS = ("tarnet", "dragonnet", "bcauss")
MODES = ("unconstrained", "cgc")
FULL_BATCH = 0

# per-kind training defaults: batch size, max epochs, patience, learning rate
KIND_DEFAULTS = {
    "tarnet": dict(batch_size=64, max_epochs=300, patience=30, learning_rate=1e-3),
    "dragonnet": dict(batch_size=64, max_epochs=300, patience=30, learning_rate=1e-3),
    "bcauss": dict(batch_size=FULL_BATCH, max_epochs=500, patience=40, learning_rate=1e-2),
}

PROPENSITY_CLIP = (0.01, 0.99)


class TrainingError(RuntimeError):
    pass


class SchemaError(ValueError):
    pass


@dataclass
class ModelSpec:
    kind: str = "tarnet"
    mode: str = "unconstrained"
    grouping: VariableGrouping | None = None
    trunk_width: int = 200
    trunk_depth: int = 3
    head_width: int = 100
    head_depth: int = 2
    learning_rate: float | None = None
    momentum: float = 0.9
    batch_size: int | None = None
    max_epochs: int | None = None
    patience: int | None = None
    seed: int = 0
    propensity_weight: float = 1.0
    balance_weight: float = 1.0
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "cgc" and (self.grouping is None or len(self.grouping) == 0):
            raise ValueError("cgc mode needs a non-empty grouping")
        for name in ("trunk_width", "trunk_depth", "head_width", "head_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        defaults = KIND_DEFAULTS[self.kind]
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)

    @property
    def has_propensity(self) -> bool:
        return self.kind != "tarnet"

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.mode}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grouping"] = None if self.grouping is None else [list(g) for g in self.grouping.groups]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        groups = d.pop("grouping", None)
        grouping = None if groups is None else VariableGrouping(tuple(map(tuple, groups)))
        return cls(grouping=grouping, **d)


@dataclass
class CausalNet:
    spec: ModelSpec
    columns: tuple[str, ...]
    trunks: list[tuple[np.ndarray, list[nn.DenseLayer]]]
    representation: nn.DenseLayer
    heads: tuple[list[nn.DenseLayer], list[nn.DenseLayer]]
    propensity: nn.DenseLayer | None = None
    y_mean: float = 0.0
    y_std: float = 1.0

    def layers(self) -> list[nn.DenseLayer]:
        out = [l for _, stack in self.trunks for l in stack]
        out.append(self.representation)
        out += self.heads[0] + self.heads[1]
        if self.propensity is not None:
            out.append(self.propensity)
        return out

    def params(self) -> list[np.ndarray]:
        return [p for l in self.layers() for p in l.params()]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    @property
    def representation_width(self) -> int:
        return self.representation.n_out

    @property
    def concat_width(self) -> int:
        return self.representation.n_in


@dataclass
class TrainReport:
    epochs_run: int
    best_val_loss: float
    final_train_loss: float
    early_stopped: bool
    val_history: list[float] = field(default_factory=list)


def _seeds(seed: int):
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(batch_ss)


def build_model(spec: ModelSpec, covariates: int | Sequence[str]) -> CausalNet:
    """
    Build the network for ``spec`` over the given covariates.

    ``covariates`` is either a count ``d`` (columns named ``x1..xd``) or the
    list of column names the grouping refers to.
    """
    if isinstance(covariates, (int, np.integer)):
        columns = tuple(f"x{i + 1}" for i in range(int(covariates)))
    else:
        columns = tuple(covariates)
    index = {c: i for i, c in enumerate(columns)}
    rng, _ = _seeds(spec.seed)
    w, depth = spec.trunk_width, spec.trunk_depth

    if spec.mode == "cgc":
        groups = []
        for g in spec.grouping.groups:
            missing = [c for c in g if c not in index]
            if missing:
                raise SchemaError(f"group {g} references unknown columns {missing}")
            groups.append(np.array([index[c] for c in g], dtype=np.int64))
        rep_act = "linear"
    else:
        groups = [np.arange(len(columns), dtype=np.int64)]
        rep_act = "relu"

    trunks = []
    for idx in groups:
        sizes = [len(idx)] + [w] * depth
        trunks.append((idx, nn.init_stack(sizes, ["relu"] * depth, rng)))
    representation = nn.init_layer(w * len(groups), w, rep_act, rng)
    head_sizes = [w] + [spec.head_width] * spec.head_depth + [1]
    head_acts = ["relu"] * spec.head_depth + ["linear"]
    heads = (nn.init_stack(head_sizes, head_acts, rng), nn.init_stack(head_sizes, head_acts, rng))
    propensity = nn.init_layer(w, 1, "sigmoid", rng) if spec.has_propensity else None
    return CausalNet(spec, columns, trunks, representation, heads, propensity)


# forward / backward ---------------------------------------------------------------

def _forward(net: CausalNet, x: np.ndarray):
    hs, trunk_caches = [], []
    for idx, stack in net.trunks:
        h, c = nn.forward(stack, x[:, idx])
        hs.append(h)
        trunk_caches.append(c)
    concat = hs[0] if len(hs) == 1 else np.concatenate(hs, axis=1)
    z, rep_cache = nn.forward([net.representation], concat)
    o0, c0 = nn.forward(net.heads[0], z)
    o1, c1 = nn.forward(net.heads[1], z)
    logit = None
    if net.propensity is not None:
        logit = z @ net.propensity.weights.T[:, 0] + net.propensity.bias[0]
    return z, o0[:, 0], o1[:, 0], logit, (trunk_caches, rep_cache, c0, c1)


def representation(net: CausalNet, x: np.ndarray) -> np.ndarray:
    """Representation-layer activations for covariate rows ``x``."""
    return _forward(net, np.asarray(x, dtype=np.float64))[0]


def _sigmoid(a):
    return nn._activate("sigmoid", a)


def _check_schema(net: CausalNet, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != len(net.columns):
        raise SchemaError(f"expected {len(net.columns)} covariate columns, got shape {x.shape}")


def loss(net: CausalNet, x, t, y, with_grads: bool = True):
    """
    Training objective on one batch, evaluated on the standardized outcome.

    Returns ``(value, grads)`` with ``grads`` aligned to ``net.params()``
    (``None`` when ``with_grads`` is false).
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    _check_schema(net, x)
    n = len(t)
    if n == 0:
        raise ValueError("empty batch")
    spec = net.spec
    ys = (np.asarray(y, dtype=np.float64) - net.y_mean) / net.y_std
    z, o0, o1, logit, (tcaches, rcache, c0, c1) = _forward(net, x)

    r0 = (o0 - ys) * (1.0 - t)
    r1 = (o1 - ys) * t
    value = float((r0 @ r0 + r1 @ r1) / n)
    d_logit = None
    if logit is not None:
        # numerically stable binary cross-entropy from logits
        bce = np.maximum(logit, 0.0) - t * logit + np.log1p(np.exp(-np.abs(logit)))
        value += spec.propensity_weight * float(bce.mean())
        g = _sigmoid(logit)
        d_logit = spec.propensity_weight * (g - t) / n
        if spec.kind == "bcauss":
            if t.sum() == 0 or t.sum() == n:
                raise ValueError(
                    "balance term undefined: batch holds a single treatment arm; train BCAUSS with the full batch"
                )
            bal, grad_g = _kernels.balance(x, t, g, *PROPENSITY_CLIP)
            value += spec.balance_weight * bal
            d_logit = d_logit + spec.balance_weight * grad_g * g * (1.0 - g)
    if spec.l2:
        value += 0.5 * spec.l2 * sum(float(np.sum(l.weights**2)) for l in net.layers())
    if not with_grads:
        return value, None

    g0, dz0 = nn.backward(net.heads[0], c0, (2.0 / n * r0)[:, None])
    g1, dz1 = nn.backward(net.heads[1], c1, (2.0 / n * r1)[:, None])
    dz = dz0 + dz1
    prop_grads = []
    if d_logit is not None:
        pw = net.propensity.weights
        prop_grads = [(d_logit @ z)[None, :], np.array([d_logit.sum()])]
        dz = dz + d_logit[:, None] * pw
    (rep_grads,), dconcat = nn.backward([net.representation], rcache, dz)

    trunk_grads = []
    offset = 0
    for (idx, stack), cache in zip(net.trunks, tcaches):
        width = stack[-1].n_out
        tg, _ = nn.backward(stack, cache, dconcat[:, offset:offset + width])
        trunk_grads += [a for pair in tg for a in pair]
        offset += width
    grads = trunk_grads + list(rep_grads)
    grads += [a for pair in g0 + g1 for a in pair]
    grads += prop_grads
    if spec.l2:
        grads = [gr + spec.l2 * p if p.ndim == 2 else gr for gr, p in zip(grads, net.params())]
    return value, grads


# training ------------------------------------------------------------------------

def _snapshot(net: CausalNet) -> list[np.ndarray]:
    return [p.copy() for p in net.params()]


def _restore(net: CausalNet, saved: list[np.ndarray]):
    for p, s in zip(net.params(), saved):
        p[...] = s


def train(net: CausalNet, train_ds, val_ds, spec: ModelSpec | None = None) -> TrainReport:
    """
    Fit ``net`` by minibatch heavy-ball SGD with early stopping on validation
    loss; the best-validation parameters are restored before returning.

    ``train_ds`` / ``val_ds`` need ``X``, ``t`` and ``y`` attributes.
    """
    spec = spec or net.spec
    x, t, y = (np.asarray(a, dtype=np.float64) for a in (train_ds.X, train_ds.t, train_ds.y))
    xv, tv, yv = (np.asarray(a, dtype=np.float64) for a in (val_ds.X, val_ds.t, val_ds.y))
    _check_schema(net, x)
    _check_schema(net, xv)
    net.y_mean = float(y.mean())
    sd = float(y.std())
    net.y_std = sd if sd > 0 else 1.0

    _, rng = _seeds(spec.seed)
    n = len(y)
    batch = n if spec.batch_size in (FULL_BATCH, None) or spec.batch_size >= n else spec.batch_size
    opt = nn.OptimizerState(spec.learning_rate, spec.momentum)
    params = net.params()

    best = np.inf
    best_params = _snapshot(net)
    history: list[float] = []
    wait = 0
    early = False
    epoch = 0
    for epoch in range(1, spec.max_epochs + 1):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for b, start in enumerate(range(0, n, batch)):
            sel = order[start:start + batch]
            value, grads = loss(net, x[sel], t[sel], y[sel])
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b} (learning rate {spec.learning_rate})"
                )
            nn.sgd_step(opt, params, grads)
        val, _ = loss(net, xv, tv, yv, with_grads=False)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch} (learning rate {spec.learning_rate})")
        history.append(val)
        if val < best:
            best, wait = val, 0
            best_params = _snapshot(net)
        else:
            wait += 1
            if wait > spec.patience:
                early = True
                break
    _restore(net, best_params)
    final, _ = loss(net, x, t, y, with_grads=False)
    return TrainReport(epoch, float(best), float(final), early, history)


def predict(net: CausalNet, x) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """De-standardized potential-outcome predictions and propensities."""
    x = np.asarray(x, dtype=np.float64)
    _check_schema(net, x)
    _, o0, o1, logit, _ = _forward(net, x)
    y0 = o0 * net.y_std + net.y_mean
    y1 = o1 * net.y_std + net.y_mean
    g = None if logit is None else _sigmoid(logit)
    return y0, y1, g


def fit(spec: ModelSpec, train_ds, val_ds) -> tuple[CausalNet, TrainReport]:
    net = build_model(spec, train_ds.columns)
    return net, train(net, train_ds, val_ds, spec)


# persistence -----------------------------------------------------------------------

def save_model(net: CausalNet, path) -> None:
    """Write ``<path>.params`` (parameter snapshot) and ``<path>.yaml`` (spec manifest)."""
    path = Path(path)
    manifest = {
        "spec": net.spec.to_dict(),
        "columns": list(net.columns),
        "y_mean": net.y_mean,
        "y_std": net.y_std,
    }
    path.with_suffix(".yaml").write_text(yaml.safe_dump(manifest, sort_keys=True), encoding="utf-8")
    nn.save_arrays(path.with_suffix(".params"), net.params(), {"model": net.spec.label})


def load_model(path) -> CausalNet:
    path = Path(path)
    manifest = yaml.safe_load(path.with_suffix(".yaml").read_text(encoding="utf-8"))
    spec = ModelSpec.from_dict(manifest["spec"])
    net = build_model(spec, manifest["columns"])
    arrays, _ = nn.load_arrays(path.with_suffix(".params"))
    params = net.params()
    if len(arrays) != len(params) or any(a.shape != p.shape for a, p in zip(arrays, params)):
        raise SchemaError(f"{path}: parameter shapes do not match the manifest")
    _restore(net, arrays)
    net.y_mean, net.y_std = float(manifest["y_mean"]), float(manifest["y_std"])
    return net


def clone(net: CausalNet) -> CausalNet:
    return copy.deepcopy(net)
