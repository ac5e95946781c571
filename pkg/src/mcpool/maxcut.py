"""The cut objective, classical baselines, and the trained neural cut model.

The differentiable loss is ``s^T A s / |E|`` with both the quadratic form
and ``|E|`` taken over ordered node pairs, so its value sits in [-1, 1] and
equals ``1 - 2 * cut_fraction`` on any +-1 assignment.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, constant
from .errors import (
    DivergedLossError,
    EmptyGraphError,
    InvalidParamsError,
    LengthMismatchError,
    NonFiniteValueError,
    TooLargeError,
)
from .graph import Graph, total_edge_weight, unnormalized_laplacian
from .nn import (
    DEFAULT_DELTA,
    DEFAULT_HETMP_SIZES,
    DEFAULT_MLP_SIZES,
    Adam,
    GINLayer,
    Module,
    PlateauScheduler,
    ScoreNet,
    _child_seeds,
    propagation_matrix,
)

__all__ = [
    "CutResult",
    "CutModelConfig",
    "cut_loss",
    "round_scores",
    "cut_metrics",
    "brute_force_maxcut",
    "levs_partition",
    "gw_partition",
    "CutModel",
    "train_cut_model",
]

BRUTE_FORCE_LIMIT = 24


@dataclass(frozen=True)
class CutResult:
    """A +-1 node assignment together with its cut statistics."""

    assignment: np.ndarray
    cut_value: float
    cut_fraction: float
    loss_value: float
    meta: dict = field(default_factory=dict, compare=False)


def cut_loss(tape: Tape, scores: Tensor, g: Graph) -> Tensor:
    """Differentiable cut loss s^T A s / |E| (ordered-pair convention)."""
    w = total_edge_weight(g)
    if w == 0.0:
        raise EmptyGraphError("cut loss is undefined on an edgeless graph")
    quad = tape.quadratic_form(scores, g.adjacency)
    return tape.scale(quad, 1.0 / w)


def round_scores(scores) -> np.ndarray:
    """Threshold scores at zero: +1 for s > 0, -1 otherwise (including 0)."""
    values = scores.values if isinstance(scores, Tensor) else np.asarray(scores)
    return np.where(values.reshape(-1) > 0, 1, -1).astype(np.int8)


def cut_metrics(g: Graph, z) -> CutResult:
    """Evaluate a +-1 assignment: cut weight, cut fraction and loss."""
    z = np.asarray(z).reshape(-1)
    if len(z) != g.n:
        raise LengthMismatchError(f"assignment length {len(z)} != n = {g.n}")
    if not np.all(np.abs(z) == 1):
        raise InvalidParamsError("assignment entries must be +-1")
    edges = g.edge_array()
    if len(edges) == 0:
        return CutResult(z.astype(np.int8), 0.0, 0.0, 1.0)
    u = edges[:, 0].astype(np.int64)
    v = edges[:, 1].astype(np.int64)
    cut_value = float(edges[:, 2][z[u] != z[v]].sum())
    undirected_total = total_edge_weight(g) / 2.0
    fraction = cut_value / undirected_total
    return CutResult(z.astype(np.int8), cut_value, fraction, 1.0 - 2.0 * fraction)


def brute_force_maxcut(g: Graph) -> CutResult:
    """Exact optimum by enumerating all 2^(n-1) sign patterns (z_0 = +1).

    Ties return the lexicographically smallest assignment (-1 < +1).
    Enforced for n <= 24.
    """
    if g.n > BRUTE_FORCE_LIMIT:
        raise TooLargeError(
            f"brute force is capped at n <= {BRUTE_FORCE_LIMIT}, got {g.n}"
        )
    if g.n == 0:
        raise EmptyGraphError("cannot cut an empty graph")
    n = g.n
    if n == 1:
        return cut_metrics(g, np.array([1], dtype=np.int8))
    dense = g.adjacency.toarray()
    w_ord = float(dense.sum())
    # Bit (n-1-i) of the pattern id encodes z_i for i >= 1, so ascending ids
    # enumerate assignments in lexicographic order (-1 before +1).
    shifts = np.arange(n - 2, -1, -1, dtype=np.int64)
    total = 1 << (n - 1)
    best_val = -np.inf
    best_id = 0
    chunk = 1 << 16
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        signs = (((ids[:, None] >> shifts[None, :]) & 1) * 2 - 1).astype(np.float64)
        z = np.concatenate([np.ones((len(ids), 1)), signs], axis=1)
        quad = np.einsum("bi,ij,bj->b", z, dense, z)
        cuts = (w_ord - quad) / 4.0
        i = int(np.argmax(cuts))
        if cuts[i] > best_val:
            best_val = float(cuts[i])
            best_id = start + i
    bits = (np.int64(best_id) >> shifts) & 1
    z = np.concatenate([[1], bits * 2 - 1]).astype(np.int8)
    return cut_metrics(g, z)


def levs_partition(g: Graph, tol: float = 1e-10,
                   max_power_iters: int = 10000, seed: int = 0) -> CutResult:
    """Partition by sign of the dominant Laplacian eigenvector.

    Power iteration on the combinatorial Laplacian (PSD, so its dominant
    eigenvector belongs to the largest eigenvalue) from a seeded random
    start; stops when successive Rayleigh quotients differ by less than
    ``tol``. Non-convergence is flagged in ``meta`` and the best iterate is
    still rounded.
    """
    if g.n == 0:
        raise EmptyGraphError("cannot cut an empty graph")
    lap = unnormalized_laplacian(g)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(g.n)
    v /= np.linalg.norm(v)
    converged = False
    rayleigh = np.inf
    iters = 0
    for iters in range(1, max_power_iters + 1):
        w = lap @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            converged = True  # Laplacian is zero (edgeless); any vector works.
            break
        new_rayleigh = float(v @ w)
        v = w / norm
        if abs(new_rayleigh - rayleigh) < tol:
            rayleigh = new_rayleigh
            converged = True
            break
        rayleigh = new_rayleigh
    z = np.where(v >= 0, 1, -1).astype(np.int8)
    result = cut_metrics(g, z)
    result.meta.update(converged=converged, power_iters=iters,
                       eigenvalue=rayleigh)
    return result


def gw_partition(g: Graph, rank: int | None = None, ascent_iters: int = 500,
                 rounding_trials: int = 64, seed: int = 0) -> CutResult:
    """Low-rank relaxation of the cut objective with hyperplane rounding.

    Unit-norm row embeddings X are improved by projected gradient ascent on
    ``sum_ij w_ij (1 - x_i . x_j)`` (gradient step, then row
    renormalization), then ``rounding_trials`` random hyperplanes round X to
    signs and the best cut is kept.
    """
    if g.n == 0:
        raise EmptyGraphError("cannot cut an empty graph")
    n = g.n
    if rank is None:
        rank = max(2, math.ceil(math.sqrt(2 * n)))
    if rank < 2:
        raise TooLargeError(f"rank must be >= 2, got {rank}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, rank))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    adj = g.adjacency
    scale = max(1.0, float(g.degrees.max(initial=0.0)))
    step = 0.05 / scale
    for _ in range(ascent_iters):
        x = x - 2.0 * step * np.asarray(adj @ x)
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        collapsed = norms[:, 0] < 1e-12
        if collapsed.any():
            x[collapsed] = rng.standard_normal((int(collapsed.sum()), rank))
            norms = np.linalg.norm(x, axis=1, keepdims=True)
        x /= norms
    best = None
    for _ in range(max(1, rounding_trials)):
        hyperplane = rng.standard_normal(rank)
        z = np.where(x @ hyperplane > 0, 1, -1).astype(np.int8)
        candidate = cut_metrics(g, z)
        if best is None or candidate.cut_value > best.cut_value:
            best = candidate
    best.meta.update(rank=rank, rounding_trials=rounding_trials)
    return best


@dataclass(frozen=True)
class CutModelConfig:
    """Hyperparameters of the trained cut model.

    ``gin_eps`` is nonzero here because with a zero self-weight the GIN
    aggregation maps structurally twinned nodes (both endpoints of a lone
    edge, say) to identical embeddings, and identical scores can never
    split them.
    """

    gin_width: int = 32
    gin_activation: str = "elu"
    gin_eps: float = 0.5
    hetmp_sizes: tuple = DEFAULT_HETMP_SIZES
    hetmp_activation: str = "tanh"
    mlp_sizes: tuple = DEFAULT_MLP_SIZES
    mlp_activation: str = "relu"
    delta: float = DEFAULT_DELTA
    lr: float = 8e-4
    epochs: int = 2000
    plateau_factor: float = 0.8
    plateau_patience: int = 100
    surrogate_feature_dim: int = 32
    onehot_feature_limit: int = 1024


class CutModel(Module):
    """Single message-passing layer followed by the score network."""

    def __init__(self, in_dim: int, config: CutModelConfig, seed: int):
        s1, s2 = _child_seeds(seed, 2)
        self.gin = GINLayer(in_dim, config.gin_width, s1,
                            activation=config.gin_activation,
                            eps=config.gin_eps, name="cut/gin")
        self.scorenet = ScoreNet(
            config.gin_width, s2,
            hetmp_sizes=config.hetmp_sizes,
            hetmp_activation=config.hetmp_activation,
            mlp_sizes=config.mlp_sizes,
            mlp_activation=config.mlp_activation,
            delta=config.delta,
            name="cut/scorenet",
        )

    def forward(self, tape: Tape, x: Tensor, g: Graph, prop=None) -> Tensor:
        h = self.gin(tape, x, g.adjacency)
        return self.scorenet(tape, h, g, prop)

    def parameters(self):
        return self.gin.parameters() + self.scorenet.parameters()


def surrogate_features(g: Graph, config: CutModelConfig, seed: int) -> np.ndarray:
    """Node features for graphs that do not carry any.

    A constant surrogate would leave structurally equivalent nodes
    indistinguishable forever, freezing training at the all-equal-scores
    saddle on symmetric graphs. One-hot node identities give each node a
    free embedding (best optimization behavior at desk scale); above the
    size cutoff seeded random features keep the cost linear in n.
    """
    if g.n <= config.onehot_feature_limit:
        return np.eye(g.n)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((g.n, config.surrogate_feature_dim))


def train_cut_model(g: Graph, config: CutModelConfig | None = None,
                    seed: int = 0) -> tuple[CutResult, dict]:
    """Minimize the cut loss on a single graph and round the best scores.

    Full-batch training with Adam and a reduce-on-plateau schedule; the
    returned partition comes from the checkpoint with the lowest loss seen
    during training. The history records per-epoch losses, the lr trace,
    the checkpoint epoch and the epochs where the scores collapsed near
    zero (the trivial saddle).
    """
    if g.n == 0:
        raise EmptyGraphError("cannot train on an empty graph")
    if total_edge_weight(g) == 0.0:
        raise EmptyGraphError("cut loss is undefined on an edgeless graph")
    config = config or CutModelConfig()
    feats = g.features
    if feats is None:
        feats = surrogate_features(g, config, seed)
    model = CutModel(feats.shape[1], config, seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    scheduler = PlateauScheduler(optimizer, config.plateau_factor,
                                 config.plateau_patience)
    prop = propagation_matrix(g, config.delta)

    losses: list[float] = []
    lr_trace: list[float] = []
    degenerate_epochs: list[int] = []
    best_loss = np.inf
    best_epoch = -1
    best_snapshot = model.snapshot()
    start = time.perf_counter()
    for epoch in range(config.epochs):
        tape = Tape()
        x = constant(feats)
        try:
            scores = model.forward(tape, x, g, prop)
            loss = cut_loss(tape, scores, g)
            optimizer.zero_grad()
            tape.backward(loss)
        except NonFiniteValueError as exc:
            raise DivergedLossError(f"epoch {epoch}: {exc}") from exc
        value = loss.item()
        losses.append(value)
        if np.abs(scores.values).mean() < 1e-3:
            degenerate_epochs.append(epoch)
        if value < best_loss:
            best_loss = value
            best_epoch = epoch
            best_snapshot = model.snapshot()
        optimizer.step()
        lr_trace.append(scheduler.step(value))
    wall = time.perf_counter() - start

    model.restore(best_snapshot)
    tape = Tape()
    scores = model.forward(tape, constant(feats), g, prop)
    result = cut_metrics(g, round_scores(scores))
    result.meta.update(soft_loss=best_loss, checkpoint_epoch=best_epoch,
                       epochs_run=config.epochs,
                       mean_abs_score=float(np.abs(scores.values).mean()))
    history = {
        "losses": losses,
        "lr_trace": lr_trace,
        "checkpoint_epoch": best_epoch,
        "best_loss": best_loss,
        "degenerate_epochs": degenerate_epochs,
        "wall_time_s": wall,
    }
    return result, history
