"""End-to-end experiment drivers: cut benchmarks and the two classifiers.

Batching unions graphs block-diagonally and tracks segment ids; pooling in a
batch is applied per graph and stitched back together, so graphs never leak
into each other through selection, assignment or fallback.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from .autodiff import Tape, Tensor, constant
from .datasets import Dataset
from .errors import (
    BadMasksError,
    DivergedLossError,
    EmptyDatasetError,
    InvalidParamsError,
    MissingLabelsError,
    NonFiniteValueError,
    SourceNotFoundError,
)
from .graph import GeneratorSpec, Graph, build_graph, generate, load_gset, total_edge_weight
from .maxcut import (
    CutModelConfig,
    brute_force_maxcut,
    cut_loss,
    gw_partition,
    levs_partition,
    train_cut_model,
)
from .nn import (
    Adam,
    Dense,
    GINLayer,
    MLP,
    Module,
    PlateauScheduler,
    _child_seeds,
    propagation_matrix,
)
from .pool import (
    Assignment,
    MaxCutPoolLayer,
    SelectOutput,
    assign_supernodes,
    connect,
    reduce_features,
    select_topk,
    unpool,
)

_VAL_TAG = 1_000_003
_TEST_TAG = 1_000_033

__all__ = [
    "TaskConfig",
    "RunReport",
    "NodeSplit",
    "TwoCommunitySpec",
    "two_community_graph",
    "run_maxcut_experiment",
    "experiment_row",
    "resolve_source",
    "train_graph_classifier",
    "train_node_classifier",
    "block_diagonal_union",
    "RESULT_COLUMNS",
    "TASK_RESULT_COLUMNS",
]

RESULT_COLUMNS = (
    "graph", "method", "seed", "n", "undirected_edges",
    "cut_value", "cut_fraction", "loss", "epochs_run", "wall_time_s",
)
TASK_RESULT_COLUMNS = RESULT_COLUMNS + ("accuracy", "val_loss", "checkpoint_epoch")

MAXCUT_METHODS = ("maxcutpool", "levs", "gw", "bruteforce")


@dataclass(frozen=True)
class TaskConfig:
    """Knobs shared by the classification pipelines.

    Defaults are desk-scale; the settings used in the original experiments
    (e.g. 1000 or 20000 epochs) remain reachable through these fields.
    """

    mp_width: int = 32
    ratio: float = 0.5
    beta: float = 1.0
    lr: float = 1e-3
    epochs: int = 200
    patience: int = 50
    batch_size: int = 32
    max_iter: int = 3
    delta: float = 2.0
    variant: str = "plain"
    no_loss: bool = False
    dropout: float = 0.1
    hetmp_sizes: tuple = (32, 32, 32, 32, 16, 16, 16, 16, 8, 8, 8, 8)
    hetmp_activation: str = "tanh"
    mlp_sizes: tuple = (16, 16)
    mlp_activation: str = "relu"
    plateau_factor: float = 0.8
    plateau_patience: int = 100

    def __post_init__(self):
        if self.beta < 0:
            raise InvalidParamsError(f"beta must be >= 0, got {self.beta}")
        if self.epochs < 1:
            raise InvalidParamsError(f"epochs must be >= 1, got {self.epochs}")

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.no_loss else self.beta


@dataclass
class RunReport:
    """Per-epoch training record plus the final held-out metric."""

    task_losses: list
    aux_losses: list
    total_losses: list
    val_losses: list | None
    lr_trace: list
    checkpoint_epoch: int
    epochs_run: int
    final_metric: float | None
    wall_time_s: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Batching utilities
# ---------------------------------------------------------------------------


def block_diagonal_union(graphs) -> tuple[Graph, np.ndarray, np.ndarray]:
    """Union a list of graphs into one block-diagonal graph.

    Returns the union graph (features stacked when every member has them),
    the node offsets of each member and per-node segment ids.
    """
    graphs = list(graphs)
    offsets = np.concatenate([[0], np.cumsum([g.n for g in graphs])])
    segments = np.concatenate([
        np.full(g.n, i, dtype=np.int64) for i, g in enumerate(graphs)
    ])
    edges = []
    for off, g in zip(offsets, graphs):
        arr = g.edge_array()
        if len(arr):
            shifted = arr.copy()
            shifted[:, 0] += off
            shifted[:, 1] += off
            edges.append(shifted)
    edge_list = np.concatenate(edges) if edges else np.zeros((0, 3))
    feats = None
    if all(g.features is not None for g in graphs):
        feats = np.vstack([g.features for g in graphs])
    union = build_graph(
        [(int(u), int(v), float(w)) for u, v, w in edge_list],
        int(offsets[-1]), features=feats,
    )
    return union, offsets[:-1], segments


def _stratified_split(labels: np.ndarray, seed: int,
                      fractions=(0.8, 0.1, 0.1)) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n = len(idx)
        n_train = max(1, int(round(fractions[0] * n)))
        n_val = int(round(fractions[1] * n))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        train.append(idx[:n_train])
        val.append(idx[n_train:n_train + n_val])
        test.append(idx[n_train + n_val:])
    return (np.sort(np.concatenate(train)),
            np.sort(np.concatenate(val)),
            np.sort(np.concatenate(test)))


def _pool_union(layer: MaxCutPoolLayer, union: Graph, graphs, offsets,
                scores: Tensor, seed_parts) -> tuple:
    """Pool every member graph independently and stitch the results.

    Selection and BFS assignment run per graph; the stitched block-diagonal
    assignment then drives one reduce and one connect on the union.
    """
    values = scores.values
    global_idx = []
    blocks = []
    hops = []
    pooled_segments = []
    fallbacks = 0
    for i, (off, g) in enumerate(zip(offsets, graphs)):
        local = select_topk(values[off:off + g.n], layer.ratio)
        fallback_seed = int(np.random.SeedSequence(
            tuple(int(s) for s in seed_parts) + (i,)).generate_state(1)[0])
        assignment = assign_supernodes(g, local.supernode_indices,
                                       layer.max_iter, fallback_seed)
        global_idx.append(local.supernode_indices + off)
        blocks.append(assignment.matrix)
        hops.append(assignment.hops)
        fallbacks += assignment.random_fallback_count
        pooled_segments.append(np.full(len(local.supernode_indices), i))
    indices = np.concatenate(global_idx)
    matrix = sp.block_diag(blocks, format="csr")
    cols = np.asarray(matrix.argmax(axis=1)).reshape(-1)
    union_assignment = Assignment(matrix, cols, np.concatenate(hops), fallbacks)
    return indices, union_assignment, np.concatenate(pooled_segments)


class GraphClassifier(Module):
    """MP - pool - MP - sum readout - MLP, trained on graph labels."""

    def __init__(self, in_dim: int, num_classes: int, config: TaskConfig,
                 seed: int):
        s1, s2, s3, s4 = _child_seeds(seed, 4)
        self.config = config
        self.gin1 = GINLayer(in_dim, config.mp_width, s1, activation="elu",
                             name="gc/gin1")
        self.pool = MaxCutPoolLayer(
            config.mp_width, s2, ratio=config.ratio, variant=config.variant,
            max_iter=config.max_iter, hetmp_sizes=config.hetmp_sizes,
            hetmp_activation=config.hetmp_activation,
            mlp_sizes=config.mlp_sizes, mlp_activation=config.mlp_activation,
            delta=config.delta, name="gc/pool",
        )
        self.gin2 = GINLayer(config.mp_width, config.mp_width, s3,
                             activation="elu", name="gc/gin2")
        self.readout = MLP(config.mp_width, (config.mp_width,), num_classes,
                           s4, activation="relu", name="gc/readout")

    def parameters(self):
        return (self.gin1.parameters() + self.pool.parameters()
                + self.gin2.parameters() + self.readout.parameters())

    def forward_batch(self, tape: Tape, graphs, seed_parts) -> tuple:
        """Returns (logits, aux_loss_tensor, batch_size)."""
        union, offsets, _ = block_diagonal_union(graphs)
        x = constant(union.features)
        h = self.gin1(tape, x, union.adjacency)
        prop = propagation_matrix(union, self.pool.scorenet.delta)
        scores = self.pool.scorenet(tape, h, union, prop)
        if total_edge_weight(union) > 0:
            aux = cut_loss(tape, scores, union)
        else:
            aux = constant(np.zeros((1, 1)))
        indices, union_assignment, pooled_segments = _pool_union(
            self.pool, union, graphs, offsets, scores, seed_parts)
        select = SelectOutput(scores, indices)
        pooled_x = reduce_features(tape, h, select, union_assignment,
                                   self.pool.variant)
        pooled_g = connect(union, union_assignment)
        h2 = self.gin2(tape, pooled_x, pooled_g.adjacency)
        summed = tape.global_sum_pool(h2, pooled_segments, len(graphs))
        logits = self.readout(tape, summed)
        return logits, aux, len(graphs)


def _batch_eval(model: GraphClassifier, dataset: Dataset, idx,
                seed_parts) -> tuple[float, float, float]:
    """(cross entropy, aux loss, accuracy) over the given graphs."""
    tape = Tape()
    graphs = [dataset.graphs[i] for i in idx]
    labels = dataset.graph_labels[idx]
    logits, aux, _ = model.forward_batch(tape, graphs, seed_parts)
    ce = tape.softmax_cross_entropy(logits, labels)
    pred = logits.values.argmax(axis=1)
    acc = float((pred == labels).mean())
    return ce.item(), aux.item(), acc


def train_graph_classifier(dataset: Dataset, config: TaskConfig | None = None,
                           seed: int = 0) -> RunReport:
    """Train the pooled graph classifier with a stratified 80/10/10 split.

    Early stopping watches the validation loss; the reported test accuracy
    always comes from the best-validation checkpoint.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset is empty")
    if any(g.features is None for g in dataset.graphs):
        raise MissingLabelsError("graph classification needs node features")
    config = config or TaskConfig()
    labels = np.asarray(dataset.graph_labels)
    degenerate = len(np.unique(labels)) < 2

    train_idx, val_idx, test_idx = _stratified_split(labels, seed)
    in_dim = dataset.graphs[0].features.shape[1]
    model = GraphClassifier(in_dim, dataset.class_count, config, seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    beta = config.effective_beta
    rng = np.random.default_rng(seed)

    task_losses, aux_losses, total_losses, val_losses, lr_trace = [], [], [], [], []
    best_val = np.inf
    best_epoch = -1
    best_snapshot = model.snapshot()
    start = time.perf_counter()
    epochs_run = 0
    for epoch in range(config.epochs):
        epochs_run = epoch + 1
        order = train_idx.copy()
        rng.shuffle(order)
        ce_sum = aux_sum = tot_sum = 0.0
        batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            tape = Tape()
            graphs = [dataset.graphs[i] for i in batch]
            try:
                logits, aux, _ = model.forward_batch(
                    tape, graphs, (seed, epoch, lo))
                ce = tape.softmax_cross_entropy(logits, labels[batch])
                total = tape.add(ce, tape.scale(aux, beta))
                optimizer.zero_grad()
                tape.backward(total)
            except NonFiniteValueError as exc:
                raise DivergedLossError(f"epoch {epoch}: {exc}") from exc
            optimizer.step()
            ce_sum += ce.item()
            aux_sum += aux.item()
            tot_sum += total.item()
            batches += 1
        task_losses.append(ce_sum / batches)
        aux_losses.append(aux_sum / batches)
        total_losses.append(tot_sum / batches)
        lr_trace.append(optimizer.lr)

        if len(val_idx):
            v_ce, v_aux, _ = _batch_eval(model, dataset, val_idx,
                                         (seed, _VAL_TAG))
            v_loss = v_ce + beta * v_aux
            val_losses.append(v_loss)
            if v_loss < best_val:
                best_val = v_loss
                best_epoch = epoch
                best_snapshot = model.snapshot()
            elif epoch - best_epoch >= config.patience:
                break
        else:
            best_epoch = epoch
            best_snapshot = model.snapshot()
    wall = time.perf_counter() - start

    model.restore(best_snapshot)
    final_metric = None
    if len(test_idx):
        _, _, final_metric = _batch_eval(model, dataset, test_idx,
                                         (seed, _TEST_TAG))
    return RunReport(
        task_losses=task_losses,
        aux_losses=[aux_losses],
        total_losses=total_losses,
        val_losses=val_losses if len(val_idx) else None,
        lr_trace=lr_trace,
        checkpoint_epoch=best_epoch,
        epochs_run=epochs_run,
        final_metric=final_metric,
        wall_time_s=wall,
        meta={"degenerate_single_class": bool(degenerate),
              "beta": beta, "variant": config.variant,
              "split_sizes": [len(train_idx), len(val_idx), len(test_idx)]},
    )


# ---------------------------------------------------------------------------
# Node classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint train/val/test node index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n: int) -> None:
        parts = [np.asarray(p, dtype=np.int64) for p in (self.train, self.val, self.test)]
        if len(parts[0]) == 0:
            raise BadMasksError("train mask must be non-empty")
        merged = np.concatenate(parts)
        if len(merged) and (merged.min() < 0 or merged.max() >= n):
            raise BadMasksError(f"mask index out of range for n={n}")
        if len(np.unique(merged)) != len(merged):
            raise BadMasksError("train/val/test masks overlap")


class NodeClassifier(Module):
    """MP - pool - MP - unpool - MP - MLP head over node labels."""

    def __init__(self, in_dim: int, num_classes: int, config: TaskConfig,
                 seed: int, unpool_mode: str = "broadcast"):
        s1, s2, s3, s4, s5, s6 = _child_seeds(seed, 6)
        self.config = config
        self.unpool_mode = unpool_mode
        w = config.mp_width
        self.gin1 = GINLayer(in_dim, w, s1, activation="relu", name="nc/gin1")
        self.pool = MaxCutPoolLayer(
            w, s2, ratio=config.ratio, variant=config.variant,
            max_iter=config.max_iter, hetmp_sizes=config.hetmp_sizes,
            hetmp_activation=config.hetmp_activation,
            mlp_sizes=config.mlp_sizes, mlp_activation=config.mlp_activation,
            delta=config.delta, name="nc/pool",
        )
        self.gin2 = GINLayer(w, w, s3, activation="relu", name="nc/gin2")
        self.gin3 = GINLayer(w, w, s4, activation="relu", name="nc/gin3")
        self.hidden = Dense(w, w, s5, activation="relu", name="nc/head_hidden")
        self.out = Dense(w, num_classes, s6, name="nc/head_out")

    def parameters(self):
        return (self.gin1.parameters() + self.pool.parameters()
                + self.gin2.parameters() + self.gin3.parameters()
                + self.hidden.parameters() + self.out.parameters())

    def forward(self, tape: Tape, g: Graph, x: Tensor, prop, *,
                train: bool, step_seed: int) -> tuple[Tensor, Tensor]:
        h = self.gin1(tape, x, g.adjacency)
        pooled = self.pool.forward(tape, g, h, seed=step_seed, prop=prop)
        h2 = self.gin2(tape, pooled.pooled_features,
                       pooled.pooled_graph.adjacency)
        lifted = unpool(tape, h2, pooled.assignment, self.unpool_mode, g.n)
        h3 = self.gin3(tape, lifted, g.adjacency)
        hid = self.hidden(tape, h3)
        hid = tape.dropout(hid, self.config.dropout, train, step_seed)
        return self.out(tape, hid), pooled.aux_loss


def train_node_classifier(g: Graph, split: NodeSplit,
                          config: TaskConfig | None = None,
                          seed: int = 0) -> RunReport:
    """Train the pool/unpool node classifier on one labeled graph.

    The loss is the masked cross entropy plus beta times the pooling loss.
    With an empty validation mask early stopping is disabled and the last
    epoch is used.
    """
    if g.labels is None:
        raise MissingLabelsError("graph has no node labels")
    config = config or TaskConfig()
    split.validate(g.n)
    feats = g.features
    if feats is None:
        raise MissingLabelsError("node classification needs node features")
    labels = g.labels
    num_classes = int(labels.max()) + 1
    model = NodeClassifier(feats.shape[1], num_classes, config, seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    scheduler = PlateauScheduler(optimizer, config.plateau_factor,
                                 config.plateau_patience)
    beta = config.effective_beta
    prop = propagation_matrix(g, config.delta)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.val, dtype=np.int64)
    test_idx = np.asarray(split.test, dtype=np.int64)

    def masked_loss(tape, logits, aux, idx):
        picked = tape.gather_rows(logits, idx)
        ce = tape.softmax_cross_entropy(picked, labels[idx])
        return ce, tape.add(ce, tape.scale(aux, beta))

    task_losses, aux_losses, total_losses, val_losses, lr_trace = [], [], [], [], []
    best_val = np.inf
    best_epoch = -1
    best_snapshot = model.snapshot()
    start = time.perf_counter()
    epochs_run = 0
    for epoch in range(config.epochs):
        epochs_run = epoch + 1
        tape = Tape()
        step_seed = int(np.random.SeedSequence((seed, epoch)).generate_state(1)[0])
        try:
            logits, aux = model.forward(tape, g, constant(feats), prop,
                                        train=True, step_seed=step_seed)
            ce, total = masked_loss(tape, logits, aux, train_idx)
            optimizer.zero_grad()
            tape.backward(total)
        except NonFiniteValueError as exc:
            raise DivergedLossError(f"epoch {epoch}: {exc}") from exc
        optimizer.step()
        task_losses.append(ce.item())
        aux_losses.append(aux.item())
        total_losses.append(total.item())

        if len(val_idx):
            vtape = Tape()
            vlogits, vaux = model.forward(vtape, g, constant(feats), prop,
                                          train=False, step_seed=0)
            _, vtotal = masked_loss(vtape, vlogits, vaux, val_idx)
            v = vtotal.item()
            val_losses.append(v)
            lr_trace.append(scheduler.step(v))
            if v < best_val:
                best_val = v
                best_epoch = epoch
                best_snapshot = model.snapshot()
            elif epoch - best_epoch >= config.patience:
                break
        else:
            lr_trace.append(optimizer.lr)
            best_epoch = epoch
            best_snapshot = model.snapshot()
    wall = time.perf_counter() - start

    model.restore(best_snapshot)
    final_metric = None
    if len(test_idx):
        tape = Tape()
        logits, _ = model.forward(tape, g, constant(feats), prop,
                                  train=False, step_seed=0)
        pred = logits.values.argmax(axis=1)
        final_metric = float((pred[test_idx] == labels[test_idx]).mean())
    return RunReport(
        task_losses=task_losses,
        aux_losses=[aux_losses],
        total_losses=total_losses,
        val_losses=val_losses if len(val_idx) else None,
        lr_trace=lr_trace,
        checkpoint_epoch=best_epoch,
        epochs_run=epochs_run,
        final_metric=final_metric,
        wall_time_s=wall,
        meta={"beta": beta, "unpool_mode": model.unpool_mode,
              "num_classes": num_classes},
    )


# ---------------------------------------------------------------------------
# Cut experiment harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoCommunitySpec:
    """Two dense blocks with sparse cross edges; labels name the block."""

    block_size: int = 20
    p_in: float = 0.3
    p_out: float = 0.05

    @property
    def label(self) -> str:
        return f"blocks:{self.block_size}:{self.p_in:g}:{self.p_out:g}"


def two_community_graph(spec: TwoCommunitySpec, seed: int = 0) -> Graph:
    """Labeled two-community graph with label-informative 2-D features."""
    rng = np.random.default_rng(seed)
    n = 2 * spec.block_size
    block = np.repeat([0, 1], spec.block_size)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = spec.p_in if block[u] == block[v] else spec.p_out
            if rng.random() < p:
                edges.append((u, v, 1.0))
    centers = np.where(block[:, None] == 0, -1.5, 1.5) * np.ones((n, 2))
    feats = centers + rng.standard_normal((n, 2))
    return build_graph(edges, n, features=feats, labels=block)


def resolve_source(source, graph_seed: int = 0) -> tuple[Graph, str]:
    """Materialize a generator spec or a Gset file path into a graph."""
    if isinstance(source, GeneratorSpec):
        return generate(source, graph_seed), source.label
    if isinstance(source, TwoCommunitySpec):
        return two_community_graph(source, graph_seed), source.label
    if isinstance(source, Graph):
        return source, f"graph:n{source.n}"
    path = os.fspath(source)
    if not os.path.exists(path):
        raise SourceNotFoundError(f"no such graph file: {path}")
    return load_gset(path), f"gset:{os.path.basename(path)}"


def experiment_row(source, method: str, seed: int,
                   config: CutModelConfig | None = None,
                   graph_seed: int = 0) -> dict:
    """One (method, seed) result row; the unit of seed-parallel work."""
    g, label = resolve_source(source, graph_seed)
    start = time.perf_counter()
    epochs = 0
    if method == "maxcutpool":
        config = config or CutModelConfig()
        result, history = train_cut_model(g, config, seed)
        epochs = len(history["losses"])
    elif method == "levs":
        result = levs_partition(g, seed=seed)
    elif method == "gw":
        result = gw_partition(g, seed=seed)
    elif method == "bruteforce":
        result = brute_force_maxcut(g)
    else:
        raise InvalidParamsError(
            f"unknown method {method!r}; choose from {MAXCUT_METHODS}"
        )
    wall = time.perf_counter() - start
    return {
        "graph": label,
        "method": method,
        "seed": seed,
        "n": g.n,
        "undirected_edges": g.num_undirected_edges,
        "cut_value": result.cut_value,
        "cut_fraction": result.cut_fraction,
        "loss": result.loss_value,
        "epochs_run": epochs,
        "wall_time_s": wall,
    }


def run_maxcut_experiment(source, methods, seeds,
                          config: CutModelConfig | None = None,
                          graph_seed: int = 0) -> list[dict]:
    """One row per (method, seed) on the same graph instance."""
    resolve_source(source, graph_seed)  # fail fast on bad sources
    rows = []
    for method in methods:
        for seed in seeds:
            rows.append(experiment_row(source, method, int(seed), config,
                                       graph_seed))
    return rows
