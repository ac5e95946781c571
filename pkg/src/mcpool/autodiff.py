"""Minimal reverse-mode differentiation over dense 2-D tensors.

A :class:`Tape` records primitive operations in execution order; backward
replays the records once in reverse. The primitive set is exactly what the
score networks, message-passing layers and training losses in this package
need — dense matmul, one sparse-dense product, elementwise activations and a
few reductions. Everything is 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DetachedLossError,
    NonDeterministicFunctionError,
    NonFiniteValueError,
    ShapeMismatchError,
    UnknownKindError,
)

__all__ = ["Tensor", "Tape", "constant", "parameter", "finite_diff_check"]


class Tensor:
    """A dense (rows, cols) float64 value with a same-shape gradient slot."""

    __slots__ = ("values", "_grad", "trainable", "name", "tape")

    def __init__(self, values, *, trainable: bool = False, name: str | None = None):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(-1, 1)
        elif v.ndim != 2:
            raise ShapeMismatchError(f"tensors are 2-D, got shape {v.shape}")
        self.values = v
        self._grad: np.ndarray | None = None
        self.trainable = trainable
        self.name = name
        self.tape: "Tape" | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        self._grad += g

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatchError(f"item() on tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"


def constant(values, name: str | None = None) -> Tensor:
    return Tensor(values, trainable=False, name=name)


def parameter(values, name: str | None = None) -> Tensor:
    return Tensor(values, trainable=True, name=name)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class _Record:
    kind: str
    inputs: tuple
    output: Tensor
    attrs: dict
    saved: dict = field(default_factory=dict)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatchError(msg)


class Tape:
    """Ordered record of primitive ops; recording order is topological."""

    def __init__(self):
        self._records: list[_Record] = []
        self._done = False

    def __len__(self) -> int:
        return len(self._records)

    # -- recording ---------------------------------------------------------

    def record(self, kind: str, inputs, attrs: dict | None = None) -> Tensor:
        """Compute a primitive forward and append it to the tape."""
        forward = _FORWARD.get(kind)
        if forward is None:
            raise UnknownKindError(f"unknown primitive kind {kind!r}")
        inputs = tuple(inputs)
        attrs = attrs or {}
        # Overflow is tolerated here because the finiteness check below
        # turns it into a hard, diagnosable error.
        with np.errstate(over="ignore", invalid="ignore"):
            values, saved = forward(inputs, attrs)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError(
                f"non-finite values produced by {kind!r}; aborting step"
            )
        out = Tensor(values)
        out.tape = self
        self._records.append(_Record(kind, inputs, out, attrs, saved))
        return out

    # Convenience wrappers used throughout the layer code.

    def matmul(self, a, b):
        return self.record("matmul", (a, b))

    def spmm(self, matrix, x):
        return self.record("spmm", (x,), {"matrix": matrix})

    def add(self, a, b):
        return self.record("add", (a, b))

    def add_bias_row(self, x, bias):
        return self.record("add_bias_row", (x, bias))

    def hadamard(self, a, b):
        return self.record("hadamard", (a, b))

    def scale(self, x, factor):
        return self.record("scale", (x,), {"factor": float(factor)})

    def gather_rows(self, x, indices):
        return self.record("gather_rows", (x,), {"indices": np.asarray(indices)})

    def tanh(self, x):
        return self.record("tanh", (x,))

    def relu(self, x):
        return self.record("relu", (x,))

    def elu(self, x):
        return self.record("elu", (x,))

    def reduce_sum(self, x):
        return self.record("reduce_sum", (x,))

    def quadratic_form(self, s, matrix):
        return self.record("quadratic_form", (s,), {"matrix": matrix})

    def softmax_cross_entropy(self, logits, targets):
        return self.record(
            "softmax_cross_entropy", (logits,),
            {"targets": np.asarray(targets, dtype=np.int64)},
        )

    def global_sum_pool(self, x, segments, num_segments):
        return self.record(
            "global_sum_pool", (x,),
            {"segments": np.asarray(segments, dtype=np.int64),
             "num_segments": int(num_segments)},
        )

    def dropout(self, x, p, train, seed):
        return self.record(
            "dropout", (x,), {"p": float(p), "train": bool(train), "seed": int(seed)}
        )

    # -- backward ----------------------------------------------------------

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Populate gradients for everything reachable from ``loss``.

        Visits the records once in reverse order. Returns a map from each
        trainable leaf tensor touched by the tape to its gradient array.
        Calling backward twice on the same tape, or on a loss that was not
        produced by it, raises :class:`DetachedLossError`.
        """
        if loss.tape is not self:
            raise DetachedLossError("loss tensor was not produced by this tape")
        if loss.shape != (1, 1):
            raise DetachedLossError(f"loss must be 1x1, got {loss.shape}")
        if self._done:
            raise DetachedLossError(
                "backward already ran on this tape; record a fresh forward pass"
            )
        self._done = True
        loss.accumulate_grad(np.ones((1, 1)))
        grads: dict[Tensor, np.ndarray] = {}
        for rec in reversed(self._records):
            g = rec.output._grad
            if g is None:
                continue
            _BACKWARD[rec.kind](rec, g)
            for t in rec.inputs:
                if t.trainable and t.tape is None:
                    grads[t] = t.grad
        return grads


# ---------------------------------------------------------------------------
# Primitive forward/backward rules. Forward returns (values, saved).
# ---------------------------------------------------------------------------


def _fw_matmul(inputs, attrs):
    a, b = inputs
    _require(a.shape[1] == b.shape[0],
             f"matmul inner dims differ: {a.shape} @ {b.shape}")
    return a.values @ b.values, {}


def _bw_matmul(rec, g):
    a, b = rec.inputs
    a.accumulate_grad(g @ b.values.T)
    b.accumulate_grad(a.values.T @ g)


def _fw_spmm(inputs, attrs):
    (x,) = inputs
    m = attrs["matrix"]
    _require(sp.issparse(m), "spmm needs a scipy sparse matrix attr")
    _require(m.shape[1] == x.shape[0],
             f"spmm dims differ: {m.shape} @ {x.shape}")
    return np.asarray(m @ x.values), {}


def _bw_spmm(rec, g):
    (x,) = rec.inputs
    x.accumulate_grad(np.asarray(rec.attrs["matrix"].T @ g))


def _fw_add(inputs, attrs):
    a, b = inputs
    _require(a.shape == b.shape, f"add shapes differ: {a.shape} vs {b.shape}")
    return a.values + b.values, {}


def _bw_add(rec, g):
    rec.inputs[0].accumulate_grad(g)
    rec.inputs[1].accumulate_grad(g)


def _fw_add_bias_row(inputs, attrs):
    x, b = inputs
    _require(b.shape == (1, x.shape[1]),
             f"bias must be (1, {x.shape[1]}), got {b.shape}")
    return x.values + b.values, {}


def _bw_add_bias_row(rec, g):
    x, b = rec.inputs
    x.accumulate_grad(g)
    b.accumulate_grad(g.sum(axis=0, keepdims=True))


def _fw_hadamard(inputs, attrs):
    a, b = inputs
    _require(a.shape == b.shape, f"hadamard shapes differ: {a.shape} vs {b.shape}")
    return a.values * b.values, {}


def _bw_hadamard(rec, g):
    a, b = rec.inputs
    a.accumulate_grad(g * b.values)
    b.accumulate_grad(g * a.values)


def _fw_scale(inputs, attrs):
    (x,) = inputs
    return x.values * attrs["factor"], {}


def _bw_scale(rec, g):
    rec.inputs[0].accumulate_grad(g * rec.attrs["factor"])


def _fw_gather_rows(inputs, attrs):
    (x,) = inputs
    idx = attrs["indices"]
    _require(idx.ndim == 1, "gather_rows indices must be 1-D")
    if len(idx) and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeMismatchError("gather_rows index out of range")
    return x.values[idx], {}


def _bw_gather_rows(rec, g):
    (x,) = rec.inputs
    buf = np.zeros_like(x.values)
    np.add.at(buf, rec.attrs["indices"], g)
    x.accumulate_grad(buf)


def _fw_tanh(inputs, attrs):
    out = np.tanh(inputs[0].values)
    return out, {"out": out}


def _bw_tanh(rec, g):
    rec.inputs[0].accumulate_grad(g * (1.0 - rec.saved["out"] ** 2))


def _fw_relu(inputs, attrs):
    x = inputs[0].values
    return np.maximum(x, 0.0), {}


def _bw_relu(rec, g):
    x = rec.inputs[0]
    x.accumulate_grad(g * (x.values > 0))


def _fw_elu(inputs, attrs):
    x = inputs[0].values
    out = np.where(x > 0, x, np.expm1(x))
    return out, {"out": out}


def _bw_elu(rec, g):
    x = rec.inputs[0]
    slope = np.where(x.values > 0, 1.0, rec.saved["out"] + 1.0)
    x.accumulate_grad(g * slope)


def _fw_reduce_sum(inputs, attrs):
    return np.array([[inputs[0].values.sum()]]), {}


def _bw_reduce_sum(rec, g):
    x = rec.inputs[0]
    x.accumulate_grad(np.full_like(x.values, g[0, 0]))


def _fw_quadratic_form(inputs, attrs):
    (s,) = inputs
    m = attrs["matrix"]
    _require(s.shape[1] == 1, f"quadratic_form needs a column vector, got {s.shape}")
    _require(m.shape == (s.shape[0], s.shape[0]),
             f"matrix {m.shape} does not match vector length {s.shape[0]}")
    ms = np.asarray(m @ s.values)
    return (s.values.T @ ms).reshape(1, 1).copy(), {"ms": ms}


def _bw_quadratic_form(rec, g):
    # The matrix is symmetric, so d(s^T A s)/ds = 2 A s.
    rec.inputs[0].accumulate_grad(2.0 * g[0, 0] * rec.saved["ms"])


def _fw_softmax_cross_entropy(inputs, attrs):
    (logits,) = inputs
    t = attrs["targets"]
    _require(t.ndim == 1 and len(t) == logits.shape[0],
             f"need one target per row, got {t.shape} for logits {logits.shape}")
    if len(t) and (t.min() < 0 or t.max() >= logits.shape[1]):
        raise ShapeMismatchError("target class out of range")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    rows = np.arange(len(t))
    nll = -(z[rows, t] - np.log(ez.sum(axis=1)))
    return np.array([[float(nll.mean())]]), {"p": p}


def _bw_softmax_cross_entropy(rec, g):
    (logits,) = rec.inputs
    t = rec.attrs["targets"]
    p = rec.saved["p"].copy()
    p[np.arange(len(t)), t] -= 1.0
    logits.accumulate_grad(g[0, 0] * p / len(t))


def _fw_global_sum_pool(inputs, attrs):
    (x,) = inputs
    seg = attrs["segments"]
    k = attrs["num_segments"]
    _require(seg.ndim == 1 and len(seg) == x.shape[0],
             "need one segment id per row")
    if len(seg) and (seg.min() < 0 or seg.max() >= k):
        raise ShapeMismatchError("segment id out of range")
    out = np.zeros((k, x.shape[1]))
    np.add.at(out, seg, x.values)
    return out, {}


def _bw_global_sum_pool(rec, g):
    rec.inputs[0].accumulate_grad(g[rec.attrs["segments"]])


def _fw_dropout(inputs, attrs):
    (x,) = inputs
    p, train, seed = attrs["p"], attrs["train"], attrs["seed"]
    if not train or p <= 0.0:
        return x.values.copy(), {"mask": None}
    if p >= 1.0:
        raise ShapeMismatchError("dropout probability must be < 1")
    mask = np.random.default_rng(seed).random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x.values * mask * scale, {"mask": mask, "scale": scale}


def _bw_dropout(rec, g):
    mask = rec.saved["mask"]
    if mask is None:
        rec.inputs[0].accumulate_grad(g)
    else:
        rec.inputs[0].accumulate_grad(g * mask * rec.saved["scale"])


_FORWARD = {
    "matmul": _fw_matmul,
    "spmm": _fw_spmm,
    "add": _fw_add,
    "add_bias_row": _fw_add_bias_row,
    "hadamard": _fw_hadamard,
    "scale": _fw_scale,
    "gather_rows": _fw_gather_rows,
    "tanh": _fw_tanh,
    "relu": _fw_relu,
    "elu": _fw_elu,
    "reduce_sum": _fw_reduce_sum,
    "quadratic_form": _fw_quadratic_form,
    "softmax_cross_entropy": _fw_softmax_cross_entropy,
    "global_sum_pool": _fw_global_sum_pool,
    "dropout": _fw_dropout,
}

_BACKWARD = {
    "matmul": _bw_matmul,
    "spmm": _bw_spmm,
    "add": _bw_add,
    "add_bias_row": _bw_add_bias_row,
    "hadamard": _bw_hadamard,
    "scale": _bw_scale,
    "gather_rows": _bw_gather_rows,
    "tanh": _bw_tanh,
    "relu": _bw_relu,
    "elu": _bw_elu,
    "reduce_sum": _bw_reduce_sum,
    "quadratic_form": _bw_quadratic_form,
    "softmax_cross_entropy": _bw_softmax_cross_entropy,
    "global_sum_pool": _bw_global_sum_pool,
    "dropout": _bw_dropout,
}

PRIMITIVE_KINDS = tuple(_FORWARD)


def finite_diff_check(f, params, eps: float = 1e-5) -> float:
    """Compare tape gradients of ``f(params)`` against central differences.

    ``f`` must rebuild its forward pass on a fresh tape each call and return
    the 1x1 loss tensor; it is evaluated twice up front and must agree
    exactly, otherwise :class:`NonDeterministicFunctionError` is raised.
    Returns ``max |g_ad - g_fd| / max(1, |g_fd|)`` over all parameter
    entries.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    first = f(params).item()
    loss = f(params)
    if loss.item() != first:
        raise NonDeterministicFunctionError(
            "f returned different values for identical parameters"
        )
    zero_grads(params)
    loss.tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, g in zip(params, analytic):
        it = np.nditer(p.values, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p.values[idx]
            p.values[idx] = orig + eps
            up = f(params).item()
            p.values[idx] = orig - eps
            down = f(params).item()
            p.values[idx] = orig
            fd = (up - down) / (2.0 * eps)
            rel = abs(g[idx] - fd) / max(1.0, abs(fd))
            worst = max(worst, rel)
            it.iternext()
    return worst
