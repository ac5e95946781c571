"""Sparse undirected graphs: construction, generators, Gset parsing, metrics.

Graphs are stored in compressed sparse row form (sorted neighbor ids plus
non-negative weights, every undirected edge present in both directions) and
are immutable after construction, so they can be shared freely across
concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateEdgeError,
    EdgeCountMismatchError,
    IndexOutOfRangeError,
    InvalidSpecError,
    MalformedHeaderError,
    NegativeWeightError,
    SelfLoopError,
)

__all__ = [
    "Graph",
    "GeneratorSpec",
    "build_graph",
    "generate",
    "parse_gset",
    "sym_norm_laplacian",
    "total_edge_weight",
    "bipartition_oracle",
]


@dataclass(frozen=True)
class Graph:
    """Immutable weighted undirected graph in CSR form.

    Attributes
    ----------
    n : int
        Number of nodes.
    indptr, indices, weights : numpy arrays
        CSR adjacency; for node ``u`` the neighbors are
        ``indices[indptr[u]:indptr[u+1]]`` (sorted ascending) with matching
        ``weights``. Each undirected edge is stored in both directions.
    features : (n, F) float array or None
        Optional node features.
    labels : (n,) int array or None
        Optional per-node integer class labels.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)
        if self.features is not None:
            self.features.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Adjacency as a scipy CSR matrix (shared, do not mutate)."""
        return sp.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.n, self.n)
        )

    @cached_property
    def degrees(self) -> np.ndarray:
        """Weighted degree of every node."""
        out = np.zeros(self.n)
        np.add.at(out, self._rows, self.weights)
        out.setflags(write=False)
        return out

    @cached_property
    def _rows(self) -> np.ndarray:
        r = np.repeat(np.arange(self.n), np.diff(self.indptr))
        r.setflags(write=False)
        return r

    @property
    def num_undirected_edges(self) -> int:
        return len(self.indices) // 2

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an (m, 3) array of (u, v, w) rows with u < v."""
        mask = self._rows < self.indices
        return np.column_stack(
            [self._rows[mask], self.indices[mask], self.weights[mask]]
        )

    def with_features(self, features: np.ndarray | None) -> "Graph":
        """Copy of this graph carrying the given feature matrix."""
        if features is not None:
            features = np.ascontiguousarray(features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != self.n:
                raise InvalidSpecError(
                    f"feature matrix must be ({self.n}, F), got {features.shape}"
                )
        return Graph(self.n, self.indptr, self.indices, self.weights,
                     features, self.labels)


def _normalize_edges(edge_list) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(edge_list, np.ndarray):
        arr = edge_list
    else:
        edge_list = list(edge_list)
        if not edge_list:
            return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        arr = np.asarray(edge_list, dtype=np.float64)
    if arr.size == 0:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise InvalidSpecError("edges must be (u, v) or (u, v, w) triples")
    u = arr[:, 0].astype(np.int64)
    v = arr[:, 1].astype(np.int64)
    w = arr[:, 2].astype(np.float64) if arr.shape[1] == 3 else np.ones(len(arr))
    return u, v, w


def build_graph(
    edge_list,
    n: int,
    features=None,
    labels=None,
) -> Graph:
    """Build a symmetric CSR graph from undirected (u, v, w) triples.

    Each input pair is stored in both directions. Self loops, negative
    weights, out-of-range endpoints and duplicate undirected edges are
    rejected.
    """
    if n < 0:
        raise IndexOutOfRangeError(f"node count must be non-negative, got {n}")
    u, v, w = _normalize_edges(edge_list)
    if len(u):
        bad = (u < 0) | (u >= n) | (v < 0) | (v >= n)
        if bad.any():
            i = int(np.argmax(bad))
            raise IndexOutOfRangeError(
                f"edge ({u[i]},{v[i]}) out of range for n={n}"
            )
        loops = u == v
        if loops.any():
            raise SelfLoopError(f"self loop at node {u[np.argmax(loops)]}")
        neg = w < 0
        if neg.any():
            i = int(np.argmax(neg))
            raise NegativeWeightError(f"edge ({u[i]},{v[i]}) has weight {w[i]} < 0")
        key = np.minimum(u, v) * n + np.maximum(u, v)
        if len(np.unique(key)) != len(key):
            uniq, counts = np.unique(key, return_counts=True)
            dup = uniq[np.argmax(counts > 1)]
            raise DuplicateEdgeError(
                f"duplicate undirected edge ({dup // n},{dup % n})"
            )

    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    vals = np.concatenate([w, w])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)

    if features is not None:
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise InvalidSpecError(
                f"feature matrix must be ({n}, F), got {features.shape}"
            )
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise InvalidSpecError(f"labels must have shape ({n},)")

    return Graph(n, indptr, cols, vals, features, labels)


def from_scipy(mat: sp.spmatrix, features=None, labels=None) -> Graph:
    """Graph from a symmetric scipy sparse matrix (diagonal dropped)."""
    coo = sp.coo_matrix(mat)
    mask = (coo.row < coo.col) & (coo.data != 0)
    triples = zip(coo.row[mask].tolist(), coo.col[mask].tolist(),
                  coo.data[mask].tolist())
    return build_graph(list(triples), mat.shape[0], features, labels)


def total_edge_weight(g: Graph) -> float:
    """Total weight over ordered pairs, i.e. twice the undirected sum."""
    return float(g.weights.sum())


def sym_norm_laplacian(g: Graph) -> sp.csr_matrix:
    """Symmetrically normalized Laplacian I - D^{-1/2} A D^{-1/2}.

    Rows of isolated (degree-zero) nodes are identity rows, which keeps the
    spectrum inside [0, 2].
    """
    deg = g.degrees
    inv_sqrt = np.zeros(g.n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    norm_vals = -g.weights * inv_sqrt[g._rows] * inv_sqrt[g.indices]
    off = sp.csr_matrix((norm_vals, g.indices, g.indptr), shape=(g.n, g.n))
    return (sp.identity(g.n, format="csr") + off).tocsr()


def unnormalized_laplacian(g: Graph) -> sp.csr_matrix:
    """Combinatorial Laplacian D - A."""
    return (sp.diags(g.degrees) - g.adjacency).tocsr()


_KINDS = ("ring", "grid2d", "complete", "complete_bipartite", "erdos_renyi")


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for one of the deterministic graph generators."""

    kind: str
    params: tuple = field(default=())
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidSpecError(f"unknown generator kind {self.kind!r}")
        if any(int(s) < 1 for s in self.params):
            raise InvalidSpecError(f"size parameters must be >= 1: {self.params}")
        want = {"ring": 1, "grid2d": 2, "complete": 1,
                "complete_bipartite": 2, "erdos_renyi": 1}[self.kind]
        if len(self.params) != want:
            raise InvalidSpecError(
                f"{self.kind} needs {want} size parameter(s), got {self.params}"
            )
        if self.kind == "erdos_renyi" and not (0.0 < self.p <= 1.0):
            raise InvalidSpecError(f"edge probability must be in (0, 1], got {self.p}")

    @classmethod
    def ring(cls, n: int) -> "GeneratorSpec":
        return cls("ring", (n,))

    @classmethod
    def grid2d(cls, rows: int, cols: int) -> "GeneratorSpec":
        return cls("grid2d", (rows, cols))

    @classmethod
    def complete(cls, n: int) -> "GeneratorSpec":
        return cls("complete", (n,))

    @classmethod
    def complete_bipartite(cls, a: int, b: int) -> "GeneratorSpec":
        return cls("complete_bipartite", (a, b))

    @classmethod
    def erdos_renyi(cls, n: int, p: float) -> "GeneratorSpec":
        return cls("erdos_renyi", (n,), p)

    @property
    def label(self) -> str:
        if self.kind == "grid2d":
            return f"grid2d:{self.params[0]}x{self.params[1]}"
        if self.kind == "complete_bipartite":
            return f"bipartite:{self.params[0]}x{self.params[1]}"
        if self.kind == "erdos_renyi":
            return f"er:{self.params[0]}:{self.p:g}"
        return f"{self.kind}:{self.params[0]}"


def generate(spec: GeneratorSpec, seed: int = 0) -> Graph:
    """Instantiate a generator spec; deterministic for a fixed seed."""
    kind = spec.kind
    if kind == "ring":
        (n,) = spec.params
        if n == 1:
            return build_graph([], 1)
        if n == 2:
            return build_graph([(0, 1, 1.0)], 2)
        edges = [(i, (i + 1) % n, 1.0) for i in range(n)]
        return build_graph(edges, n)
    if kind == "grid2d":
        rows, cols = spec.params
        edges = []
        for r in range(rows):
            for c in range(cols):
                u = r * cols + c
                if c + 1 < cols:
                    edges.append((u, u + 1, 1.0))
                if r + 1 < rows:
                    edges.append((u, u + cols, 1.0))
        return build_graph(edges, rows * cols)
    if kind == "complete":
        (n,) = spec.params
        iu, ju = np.triu_indices(n, k=1)
        return build_graph(np.column_stack([iu, ju]), n)
    if kind == "complete_bipartite":
        a, b = spec.params
        left, right = np.meshgrid(np.arange(a), np.arange(a, a + b))
        return build_graph(np.column_stack([left.ravel(), right.ravel()]), a + b)
    if kind == "erdos_renyi":
        (n,) = spec.params
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(len(iu)) < spec.p
        return build_graph(np.column_stack([iu[keep], ju[keep]]), n)
    raise InvalidSpecError(f"unknown generator kind {kind!r}")


def parse_gset(text: str | bytes) -> Graph:
    """Parse the plain 'N M / u v w' edge-list format (1-indexed node ids).

    Parsing is strict: the header must declare the exact number of edge
    lines that follow, and comment lines are not supported.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeaderError("empty input")
    header = lines[0].split()
    if len(header) != 2:
        raise MalformedHeaderError(f"expected 'N M' header, got {lines[0]!r}")
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError as exc:
        raise MalformedHeaderError(f"non-integer header {lines[0]!r}") from exc
    if n < 0 or m < 0:
        raise MalformedHeaderError(f"negative counts in header {lines[0]!r}")
    if len(lines) - 1 != m:
        raise EdgeCountMismatchError(
            f"header declares {m} edges but found {len(lines) - 1} edge lines"
        )
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise MalformedHeaderError(f"expected 'u v w' edge line, got {ln!r}")
        u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        if not (1 <= u <= n and 1 <= v <= n):
            raise IndexOutOfRangeError(f"edge ({u},{v}) outside 1..{n}")
        edges.append((u - 1, v - 1, w))
    return build_graph(edges, n)


def load_gset(path) -> Graph:
    with open(path, "rb") as fh:
        return parse_gset(fh.read())


def bipartition_oracle(g: Graph) -> np.ndarray | None:
    """Two-coloring in {-1, +1} cutting every edge, or None if not bipartite.

    Works per connected component via breadth-first search; isolated nodes
    get +1.
    """
    color = np.zeros(g.n, dtype=np.int8)
    for start in range(g.n):
        if color[start] != 0:
            continue
        color[start] = 1
        queue = [start]
        while queue:
            u = queue.pop()
            cu = color[u]
            for v in g.indices[g.indptr[u]:g.indptr[u + 1]]:
                if color[v] == 0:
                    color[v] = -cu
                    queue.append(int(v))
                elif color[v] == cu:
                    return None
    return color.astype(np.int8)
