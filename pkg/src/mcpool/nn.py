"""Layer zoo: heterophilic message passing, GIN, MLPs and the score network.

Layers are plain parameter containers; a forward pass records primitives on
the caller's tape, so one model instance belongs to one training session at
a time. Frozen models may be shared read-only.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .autodiff import Tape, Tensor, parameter
from .errors import ShapeMismatchError
from .graph import Graph, sym_norm_laplacian

__all__ = [
    "glorot_init",
    "Dense",
    "MLP",
    "HetMPLayer",
    "GINLayer",
    "ScoreNet",
    "Adam",
    "PlateauScheduler",
    "propagation_matrix",
    "save_checkpoint",
    "load_checkpoint",
]

DEFAULT_HETMP_SIZES = (32, 32, 32, 32, 16, 16, 16, 16, 8, 8, 8, 8)
DEFAULT_MLP_SIZES = (16, 16)
DEFAULT_DELTA = 2.0

_ACTIVATIONS = ("tanh", "relu", "elu", "identity")


def glorot_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Uniform Glorot initialization in +-sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeMismatchError(f"matrix dims must be >= 1, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return np.random.default_rng(seed).uniform(-limit, limit, (rows, cols))


def _child_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def _activate(tape: Tape, x: Tensor, kind: str) -> Tensor:
    if kind == "identity":
        return x
    if kind not in _ACTIVATIONS:
        raise ShapeMismatchError(f"unknown activation {kind!r}")
    return tape.record(kind, (x,))


class Module:
    """Minimal parameter-container base."""

    def parameters(self) -> list[Tensor]:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.values for p in self.parameters()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.values.copy() for p in self.parameters()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.values[...] = snap[p.name]


class Dense(Module):
    """Affine map x @ W + b with optional activation."""

    def __init__(self, in_dim: int, out_dim: int, seed: int,
                 activation: str = "identity", name: str = "dense"):
        self.weight = parameter(glorot_init(in_dim, out_dim, seed),
                                name=f"{name}/weight")
        self.bias = parameter(np.zeros((1, out_dim)), name=f"{name}/bias")
        self.activation = activation

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        h = tape.add_bias_row(tape.matmul(x, self.weight), self.bias)
        return _activate(tape, h, self.activation)

    def parameters(self):
        return [self.weight, self.bias]


class MLP(Module):
    """Stack of Dense layers; the final layer applies ``out_activation``."""

    def __init__(self, in_dim: int, hidden, out_dim: int, seed: int,
                 activation: str = "relu", out_activation: str = "identity",
                 name: str = "mlp"):
        seeds = _child_seeds(seed, len(hidden) + 1)
        self.layers: list[Dense] = []
        prev = in_dim
        for i, h in enumerate(hidden):
            self.layers.append(
                Dense(prev, h, seeds[i], activation, name=f"{name}/hidden{i}")
            )
            prev = h
        self.layers.append(
            Dense(prev, out_dim, seeds[-1], out_activation, name=f"{name}/out")
        )

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(tape, x)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


def propagation_matrix(g: Graph, delta: float) -> sp.csr_matrix:
    """Propagation operator I - delta * L_sym for heterophilic passing.

    Rows of isolated nodes are forced to identity so the layer degenerates
    to a per-node affine map there.
    """
    prop = (sp.identity(g.n, format="csr")
            - delta * sym_norm_laplacian(g)).tocsr()
    isolated = np.flatnonzero(g.degrees == 0)
    if len(isolated):
        prop = prop.tolil()
        for i in isolated:
            prop[i, i] = 1.0
        prop = prop.tocsr()
    return prop


class HetMPLayer(Module):
    """Message passing with the sharpening operator P = I - delta * L_sym.

    With delta = 0 this is a per-node affine map; with delta = 1 it smooths
    like a GCN step; delta > 1 amplifies high-frequency components, pushing
    adjacent nodes apart.
    """

    def __init__(self, in_dim: int, out_dim: int, seed: int,
                 delta: float = DEFAULT_DELTA, activation: str = "tanh",
                 name: str = "hetmp"):
        if delta < 0:
            raise ShapeMismatchError(f"delta must be >= 0, got {delta}")
        self.delta = float(delta)
        self.weight = parameter(glorot_init(in_dim, out_dim, seed),
                                name=f"{name}/weight")
        self.bias = parameter(np.zeros((1, out_dim)), name=f"{name}/bias")
        self.activation = activation

    def __call__(self, tape: Tape, x: Tensor, prop: sp.csr_matrix) -> Tensor:
        h = tape.spmm(prop, tape.matmul(x, self.weight))
        h = tape.add_bias_row(h, self.bias)
        return _activate(tape, h, self.activation)

    def parameters(self):
        return [self.weight, self.bias]


class GINLayer(Module):
    """GIN update: inner MLP of (1 + eps) * x_i + sum_j w_ij x_j.

    ``eps`` is fixed (non-trainable); the inner MLP is two Dense layers,
    both followed by the layer activation.
    """

    def __init__(self, in_dim: int, width: int, seed: int,
                 activation: str = "elu", eps: float = 0.0, name: str = "gin"):
        s1, s2 = _child_seeds(seed, 2)
        self.eps = float(eps)
        self.lin1 = Dense(in_dim, width, s1, activation, name=f"{name}/lin1")
        self.lin2 = Dense(width, width, s2, activation, name=f"{name}/lin2")

    def __call__(self, tape: Tape, x: Tensor, adjacency: sp.csr_matrix) -> Tensor:
        agg = tape.add(tape.scale(x, 1.0 + self.eps), tape.spmm(adjacency, x))
        return self.lin2(tape, self.lin1(tape, agg))

    def parameters(self):
        return self.lin1.parameters() + self.lin2.parameters()


class ScoreNet(Module):
    """Produces one score per node in (-1, 1).

    A linear layer lifts the features to the first hidden size, a stack of
    heterophilic message-passing layers sharpens them, and an MLP head with
    a final tanh squashes the result to a single column.
    """

    def __init__(self, in_dim: int, seed: int,
                 hetmp_sizes=DEFAULT_HETMP_SIZES,
                 hetmp_activation: str = "tanh",
                 mlp_sizes=DEFAULT_MLP_SIZES,
                 mlp_activation: str = "relu",
                 delta: float = DEFAULT_DELTA,
                 name: str = "scorenet"):
        hetmp_sizes = tuple(hetmp_sizes)
        if not hetmp_sizes:
            raise ShapeMismatchError("need at least one message-passing layer")
        seeds = _child_seeds(seed, len(hetmp_sizes) + 2)
        self.delta = float(delta)
        self.input_linear = Dense(in_dim, hetmp_sizes[0], seeds[0],
                                  "identity", name=f"{name}/input")
        self.hetmp: list[HetMPLayer] = []
        prev = hetmp_sizes[0]
        for i, h in enumerate(hetmp_sizes):
            self.hetmp.append(
                HetMPLayer(prev, h, seeds[1 + i], delta, hetmp_activation,
                           name=f"{name}/hetmp{i}")
            )
            prev = h
        self.head = MLP(prev, tuple(mlp_sizes), 1, seeds[-1],
                        activation=mlp_activation, out_activation="tanh",
                        name=f"{name}/head")

    def __call__(self, tape: Tape, x: Tensor, g: Graph,
                 prop: sp.csr_matrix | None = None) -> Tensor:
        if prop is None:
            prop = propagation_matrix(g, self.delta)
        h = self.input_linear(tape, x)
        for layer in self.hetmp:
            h = layer(tape, h, prop)
        return self.head(tape, h)

    def parameters(self):
        params = self.input_linear.parameters()
        for layer in self.hetmp:
            params += layer.parameters()
        return params + self.head.parameters()


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr: float = 8e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ShapeMismatchError(f"learning rate must be > 0, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.values) for p in self.params]
        self._v = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class PlateauScheduler:
    """Multiplies the optimizer lr by ``factor`` after ``patience`` stalls.

    A stall is a step whose metric does not strictly improve on the best
    seen so far; the stall counter resets both on improvement and after a
    reduction.
    """

    def __init__(self, optimizer: Adam, factor: float = 0.8, patience: int = 100):
        if not (0.0 < factor < 1.0):
            raise ShapeMismatchError(f"factor must be in (0, 1), got {factor}")
        self.optimizer = optimizer
        self.factor = float(factor)
        self.patience = int(patience)
        self.best = np.inf
        self.stalls = 0

    def step(self, metric: float) -> float:
        if metric < self.best:
            self.best = float(metric)
            self.stalls = 0
        else:
            self.stalls += 1
            if self.stalls >= self.patience:
                self.optimizer.lr *= self.factor
                self.stalls = 0
        return self.optimizer.lr


def save_checkpoint(params, path) -> None:
    """Write named parameters as a JSON map of shape + row-major values."""
    blob = {}
    for p in params:
        if p.name is None:
            raise ShapeMismatchError("checkpointed parameters need names")
        blob[p.name] = {"shape": list(p.shape), "values": p.values.ravel().tolist()}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(blob, fh)


def load_checkpoint(params, path) -> None:
    """Restore parameter values written by :func:`save_checkpoint`."""
    with open(path, "r", encoding="ascii") as fh:
        blob = json.load(fh)
    for p in params:
        entry = blob[p.name]
        vals = np.asarray(entry["values"]).reshape(entry["shape"])
        if tuple(entry["shape"]) != p.shape:
            raise ShapeMismatchError(
                f"checkpoint shape {entry['shape']} != parameter {p.shape}"
            )
        p.values[...] = vals
