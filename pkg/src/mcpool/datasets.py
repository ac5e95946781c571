"""Graph classification datasets: the multipartite generator and JSONL I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParamsError,
    MalformedHeaderError,
    MissingFeaturesError,
    ZeroNormFeatureError,
)
from .graph import Graph, build_graph

__all__ = [
    "Dataset",
    "generate_multipartite_dataset",
    "feature_homophily",
    "save_dataset",
    "load_dataset",
]

DATASET_FORMAT = "mcpool-ds"
DATASET_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """A labeled collection of graphs for classification."""

    graphs: list[Graph]
    graph_labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if len(self.graphs) == 0:
            raise InvalidParamsError("dataset must contain at least one graph")
        if len(self.graphs) != len(self.graph_labels):
            raise InvalidParamsError("one label per graph required")
        labels = np.asarray(self.graph_labels)
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise InvalidParamsError(
                f"labels must lie in [0, {self.class_count})"
            )

    def __len__(self) -> int:
        return len(self.graphs)


def generate_multipartite_dataset(
    centers: int,
    graphs_per_class: int,
    max_nodes_per_cluster: int,
    noise_scale: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Generate complete multipartite graphs with rotation-determined labels.

    ``centers`` colored cluster centers sit on a unit polygon. The class of a
    graph is the color of the cluster whose center sits on the positive
    x-axis; after each class the polygon is rotated by one step so every
    color takes a turn there. Per graph, each cluster receives a uniform
    number of nodes in ``[1, max_nodes_per_cluster]``; node features are the
    2D position (center plus isotropic Gaussian noise of scale
    ``noise_scale``) concatenated with the one-hot cluster color, and the
    topology connects all pairs of nodes from different clusters.
    """
    c = int(centers)
    if c < 2:
        raise InvalidParamsError(f"need at least 2 centers, got {centers}")
    if graphs_per_class < 1:
        raise InvalidParamsError("graphs_per_class must be >= 1")
    if max_nodes_per_cluster < 1:
        raise InvalidParamsError("max_nodes_per_cluster must be >= 1")
    if noise_scale < 0:
        raise InvalidParamsError("noise_scale must be >= 0")

    rng = np.random.default_rng(seed)
    graphs: list[Graph] = []
    labels: list[int] = []
    for rotation in range(c):
        # After `rotation` steps the color at the positive x-axis is -rotation mod c.
        label = (-rotation) % c
        angles = 2.0 * math.pi * (np.arange(c) + rotation) / c
        cx = np.cos(angles)
        cy = np.sin(angles)
        for _ in range(graphs_per_class):
            counts = rng.integers(1, max_nodes_per_cluster + 1, size=c)
            n = int(counts.sum())
            offsets = np.concatenate([[0], np.cumsum(counts)])
            feats = np.zeros((n, 2 + c))
            node_colors = np.zeros(n, dtype=np.int64)
            for k in range(c):
                lo, hi = offsets[k], offsets[k + 1]
                feats[lo:hi, 0] = cx[k] + rng.normal(0.0, noise_scale, hi - lo)
                feats[lo:hi, 1] = cy[k] + rng.normal(0.0, noise_scale, hi - lo)
                feats[lo:hi, 2 + k] = 1.0
                node_colors[lo:hi] = k
            blocks = []
            for a in range(c):
                for b in range(a + 1, c):
                    us, vs = np.meshgrid(np.arange(offsets[a], offsets[a + 1]),
                                         np.arange(offsets[b], offsets[b + 1]))
                    blocks.append(np.column_stack([us.ravel(), vs.ravel()]))
            edges = np.concatenate(blocks) if blocks else np.zeros((0, 2))
            graphs.append(build_graph(edges, n, features=feats, labels=node_colors))
            labels.append(label)
    return Dataset(graphs, np.asarray(labels, dtype=np.int64), c)


def feature_homophily(dataset: Dataset) -> float:
    """Absolute dataset mean of per-graph mean cosine similarity over edges.

    For each graph the cosine similarity of the feature vectors at the two
    endpoints is averaged over the (ordered-pair) edge set; the score is the
    absolute value of the mean across graphs. Edgeless graphs contribute 0.
    """
    per_graph = []
    for g in dataset.graphs:
        if g.features is None:
            raise MissingFeaturesError("all graphs must carry node features")
        if len(g.indices) == 0:
            per_graph.append(0.0)
            continue
        norms = np.linalg.norm(g.features, axis=1)
        touched = np.unique(g.indices)
        if np.any(norms[touched] == 0):
            raise ZeroNormFeatureError(
                "zero-norm feature row on a node incident to an edge"
            )
        rows = g._rows
        cols = g.indices
        dots = np.einsum("ij,ij->i", g.features[rows], g.features[cols])
        cos = dots / (norms[rows] * norms[cols])
        per_graph.append(float(cos.mean()))
    return abs(float(np.mean(per_graph)))


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as JSON Lines with a leading header record."""
    with open(path, "w", encoding="ascii") as fh:
        header = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "classes": dataset.class_count,
        }
        fh.write(json.dumps(header) + "\n")
        for g, y in zip(dataset.graphs, dataset.graph_labels):
            rec = {
                "n": g.n,
                "edges": [[int(u), int(v), float(w)] for u, v, w in g.edge_array()],
                "x": None if g.features is None else g.features.tolist(),
                "y": int(y),
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise MalformedHeaderError("empty dataset file")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT:
        raise MalformedHeaderError(f"not a {DATASET_FORMAT} file: {header}")
    if header.get("version") != DATASET_VERSION:
        raise MalformedHeaderError(f"unsupported version {header.get('version')}")
    graphs, labels = [], []
    for ln in lines[1:]:
        rec = json.loads(ln)
        feats = None if rec["x"] is None else np.asarray(rec["x"], dtype=np.float64)
        graphs.append(build_graph(rec["edges"], rec["n"], features=feats))
        labels.append(int(rec["y"]))
    return Dataset(graphs, np.asarray(labels, dtype=np.int64), int(header["classes"]))
