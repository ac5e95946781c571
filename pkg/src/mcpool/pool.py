"""Hierarchical pooling: top-K selection, BFS assignment, reduce, connect.

The pooling layer keeps the K highest-scoring nodes as supernodes, assigns
every other node to its nearest supernode by multi-source label propagation,
and builds the pooled graph by coalescing edges between clusters. Gradients
reach the score network through the score-times-features product, not
through the (non-differentiable) index selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import Tape, Tensor, constant
from .errors import (
    EmptyGraphError,
    InvalidRatioError,
    InvalidSupernodeError,
    ShapeMismatchError,
)
from .graph import Graph, from_scipy, total_edge_weight
from .maxcut import cut_loss
from .nn import DEFAULT_DELTA, DEFAULT_HETMP_SIZES, DEFAULT_MLP_SIZES, Module, ScoreNet

__all__ = [
    "SelectOutput",
    "Assignment",
    "PoolOutput",
    "select_topk",
    "assign_supernodes",
    "reduce_features",
    "connect",
    "unpool",
    "MaxCutPoolLayer",
]

DEFAULT_MAX_ITER = 3


@dataclass(frozen=True)
class SelectOutput:
    """Scores plus the ascending node ids chosen as supernodes."""

    scores: Tensor | np.ndarray
    supernode_indices: np.ndarray


@dataclass(frozen=True)
class Assignment:
    """Sparse binary node-to-supernode map produced by the BFS assignment."""

    matrix: sp.csr_matrix
    node_to_super: np.ndarray
    hops: np.ndarray
    random_fallback_count: int

    @property
    def num_supernodes(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class PoolOutput:
    """Everything a pooling layer produces for one graph."""

    pooled_graph: Graph
    pooled_features: Tensor
    select: SelectOutput
    assignment: Assignment
    aux_loss: Tensor


def select_topk(scores, ratio: float) -> SelectOutput:
    """Keep the K = max(1, floor(ratio * N)) highest-scoring nodes.

    Ties break toward the lower node id; the selected indices come back
    sorted ascending.
    """
    if not (0.0 < ratio <= 1.0):
        raise InvalidRatioError(f"ratio must be in (0, 1], got {ratio}")
    values = scores.values if isinstance(scores, Tensor) else np.asarray(scores)
    values = values.reshape(-1)
    n = len(values)
    if n < 1:
        raise EmptyGraphError("cannot select from an empty graph")
    k = max(1, int(np.floor(ratio * n)))
    order = np.lexsort((np.arange(n), -values))
    picked = np.sort(order[:k]).astype(np.int64)
    return SelectOutput(scores, picked)


def assign_supernodes(g: Graph, supernodes, max_iter: int = DEFAULT_MAX_ITER,
                      seed: int = 0) -> Assignment:
    """Assign every node to a supernode by iterated one-hot propagation.

    Column 0 of the internal encoding matrix is a fake supernode that stands
    for "not reached yet". Each round propagates the one-hot encodings of
    the assigned nodes over the adjacency; newly reached nodes take the
    argmax over supernode columns (ties go to the lowest column). Nodes
    still unreached after ``max_iter`` rounds are assigned uniformly at
    random among all supernodes.
    """
    supernodes = np.asarray(supernodes, dtype=np.int64)
    if supernodes.ndim != 1 or len(supernodes) == 0:
        raise InvalidSupernodeError("need a non-empty 1-D supernode list")
    if len(np.unique(supernodes)) != len(supernodes):
        raise InvalidSupernodeError("supernode ids must be distinct")
    if supernodes.min() < 0 or supernodes.max() >= g.n:
        raise InvalidSupernodeError(f"supernode id out of range for n={g.n}")
    if max_iter < 0:
        raise InvalidSupernodeError(f"max_iter must be >= 0, got {max_iter}")

    n, k = g.n, len(supernodes)
    col = np.full(n, -1, dtype=np.int64)
    hops = np.full(n, -1, dtype=np.int64)
    col[supernodes] = np.arange(k)
    hops[supernodes] = 0

    adjacency = g.adjacency
    for it in range(1, max_iter + 1):
        unassigned = np.flatnonzero(col < 0)
        if len(unassigned) == 0:
            break
        assigned = np.flatnonzero(col >= 0)
        # One-hot encoding over K+1 columns; column 0 stays empty (fake).
        encoding = sp.csr_matrix(
            (np.ones(len(assigned)), (assigned, col[assigned] + 1)),
            shape=(n, k + 1),
        )
        mass = (adjacency @ encoding).tocsr()
        mass.sum_duplicates()
        mass.sort_indices()
        for i in unassigned:
            lo, hi = mass.indptr[i], mass.indptr[i + 1]
            if lo == hi:
                continue
            data = mass.data[lo:hi]
            cols = mass.indices[lo:hi]
            col[i] = cols[int(np.argmax(data))] - 1
            hops[i] = it

    fallback = np.flatnonzero(col < 0)
    if len(fallback):
        rng = np.random.default_rng(seed)
        col[fallback] = rng.integers(0, k, size=len(fallback))
    matrix = sp.csr_matrix(
        (np.ones(n), (np.arange(n), col)), shape=(n, k)
    )
    return Assignment(matrix, col, hops, int(len(fallback)))


def _score_scaled(tape: Tape, scores_sel: Tensor, feats: Tensor) -> Tensor:
    # Broadcast the K x 1 scores across feature columns via a constant ones
    # row; the engine only broadcasts row biases.
    ones = constant(np.ones((1, feats.shape[1])))
    return tape.hadamard(tape.matmul(scores_sel, ones), feats)


def reduce_features(tape: Tape, x: Tensor, select: SelectOutput,
                    assignment: Assignment | None,
                    variant: str = "plain") -> Tensor:
    """Pooled node features, score-scaled so gradients pass the selection.

    ``plain`` keeps the selected rows of ``x``; ``expressive`` sums the
    features of every node in each cluster. Either way row k is multiplied
    by the score of the k-th supernode.
    """
    idx = select.supernode_indices
    scores_sel = tape.gather_rows(select.scores, idx)
    if variant == "plain":
        return _score_scaled(tape, scores_sel, tape.gather_rows(x, idx))
    if variant == "expressive":
        if assignment is None:
            raise ShapeMismatchError("expressive reduction needs an assignment")
        clustered = tape.spmm(assignment.matrix.T.tocsr(), x)
        return _score_scaled(tape, scores_sel, clustered)
    raise ShapeMismatchError(f"unknown reduction variant {variant!r}")


def connect(g: Graph, assignment: Assignment,
            remove_self_loops: bool = True) -> Graph:
    """Pooled adjacency S^T A S with coalesced (summed) edge weights."""
    s = assignment.matrix
    pooled = (s.T @ g.adjacency @ s).tocsr()
    if remove_self_loops:
        pooled.setdiag(0.0)
        pooled.eliminate_zeros()
    return from_scipy(pooled)


def unpool(tape: Tape, pooled: Tensor, assignment: Assignment, mode: str,
           n: int) -> Tensor:
    """Lift pooled features back to the original nodes.

    ``broadcast`` copies each supernode's row to every node of its cluster
    (S @ X'); ``padding`` writes rows only at the supernodes and zero
    everywhere else.
    """
    if assignment.matrix.shape[0] != n:
        raise ShapeMismatchError(
            f"assignment covers {assignment.matrix.shape[0]} nodes, not {n}"
        )
    if mode == "broadcast":
        return tape.spmm(assignment.matrix, pooled)
    if mode == "padding":
        supernodes = np.flatnonzero(assignment.hops == 0)
        scatter = sp.csr_matrix(
            (np.ones(len(supernodes)),
             (supernodes, assignment.node_to_super[supernodes])),
            shape=(n, assignment.matrix.shape[1]),
        )
        return tape.spmm(scatter, pooled)
    raise ShapeMismatchError(f"unknown unpool mode {mode!r}")


class MaxCutPoolLayer(Module):
    """Score, select, assign, reduce and connect in one trainable layer.

    The auxiliary loss is computed from the full pre-rounding score vector.
    Edgeless inputs contribute a constant zero loss instead of an error so
    batches may contain degenerate graphs.
    """

    def __init__(self, in_dim: int, seed: int, ratio: float = 0.5,
                 variant: str = "plain", max_iter: int = DEFAULT_MAX_ITER,
                 hetmp_sizes=DEFAULT_HETMP_SIZES, hetmp_activation: str = "tanh",
                 mlp_sizes=DEFAULT_MLP_SIZES, mlp_activation: str = "relu",
                 delta: float = DEFAULT_DELTA, name: str = "pool"):
        if not (0.0 < ratio <= 1.0):
            raise InvalidRatioError(f"ratio must be in (0, 1], got {ratio}")
        if variant not in ("plain", "expressive"):
            raise ShapeMismatchError(f"unknown variant {variant!r}")
        self.ratio = float(ratio)
        self.variant = variant
        self.max_iter = int(max_iter)
        self.scorenet = ScoreNet(
            in_dim, seed, hetmp_sizes=hetmp_sizes,
            hetmp_activation=hetmp_activation, mlp_sizes=mlp_sizes,
            mlp_activation=mlp_activation, delta=delta,
            name=f"{name}/scorenet",
        )

    def forward(self, tape: Tape, g: Graph, x: Tensor, seed: int = 0,
                prop=None, frozen: tuple | None = None) -> PoolOutput:
        """Pool one graph; ``frozen`` repeats a previous (select, assignment)."""
        scores = self.scorenet(tape, x, g, prop)
        if total_edge_weight(g) > 0.0:
            aux = cut_loss(tape, scores, g)
        else:
            aux = constant(np.zeros((1, 1)))
        if frozen is not None:
            prev_select, assignment = frozen
            select = SelectOutput(scores, prev_select.supernode_indices)
        else:
            select = select_topk(scores, self.ratio)
            assignment = assign_supernodes(g, select.supernode_indices,
                                           self.max_iter, seed)
        pooled_x = reduce_features(tape, x, select, assignment, self.variant)
        pooled_g = connect(g, assignment)
        return PoolOutput(pooled_g, pooled_x, select, assignment, aux)

    def parameters(self):
        return self.scorenet.parameters()
