"""Scikit-learn style estimators wrapping the cut solvers and the pooler.

These follow the fit/predict/transform conventions (parameters set in
``__init__``, work done in ``fit``, fitted attributes carrying a trailing
underscore) so the solvers compose with ``clone``, ``get_params`` and
grid-search style sweeps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autodiff import Tape, constant
from .graph import Graph
from .maxcut import (
    CutModelConfig,
    brute_force_maxcut,
    cut_loss,
    gw_partition,
    levs_partition,
    train_cut_model,
)
from .nn import (
    DEFAULT_HETMP_SIZES,
    DEFAULT_MLP_SIZES,
    Adam,
    PlateauScheduler,
    propagation_matrix,
)
from .pool import MaxCutPoolLayer

__all__ = [
    "NeuralCut",
    "EigenvectorSignCut",
    "RandomizedRoundingCut",
    "ExhaustiveCut",
    "MaxCutPool",
    "check_graph",
]


def check_graph(graph) -> Graph:
    """Validate that the input is a Graph (the estimators' sample type)."""
    if not isinstance(graph, Graph):
        raise TypeError(
            f"expected an mcpool Graph, got {type(graph).__name__}; build one "
            "with build_graph() or a generator"
        )
    return graph


class _BaseCut(BaseEstimator):
    """Shared fit/predict plumbing for the cut estimators."""

    def _solve(self, graph: Graph):
        raise NotImplementedError

    def fit(self, graph, y=None):
        graph = check_graph(graph)
        result = self._solve(graph)
        self.labels_ = result.assignment
        self.cut_value_ = result.cut_value
        self.cut_fraction_ = result.cut_fraction
        self.loss_ = result.loss_value
        self.result_ = result
        return self

    def predict(self, graph=None):
        if not hasattr(self, "labels_"):
            raise NotFittedError("call fit() first")
        return self.labels_

    def fit_predict(self, graph, y=None):
        return self.fit(graph).labels_


class NeuralCut(_BaseCut):
    """Cut partitioner trained by minimizing the differentiable cut loss."""

    def __init__(self, lr=8e-4, epochs=2000, gin_width=32,
                 hetmp_sizes=DEFAULT_HETMP_SIZES, hetmp_activation="tanh",
                 mlp_sizes=DEFAULT_MLP_SIZES, delta=2.0,
                 plateau_factor=0.8, plateau_patience=100, random_state=0):
        self.lr = lr
        self.epochs = epochs
        self.gin_width = gin_width
        self.hetmp_sizes = hetmp_sizes
        self.hetmp_activation = hetmp_activation
        self.mlp_sizes = mlp_sizes
        self.delta = delta
        self.plateau_factor = plateau_factor
        self.plateau_patience = plateau_patience
        self.random_state = random_state

    def _solve(self, graph):
        config = CutModelConfig(
            gin_width=self.gin_width,
            hetmp_sizes=tuple(self.hetmp_sizes),
            hetmp_activation=self.hetmp_activation,
            mlp_sizes=tuple(self.mlp_sizes),
            delta=self.delta,
            lr=self.lr,
            epochs=self.epochs,
            plateau_factor=self.plateau_factor,
            plateau_patience=self.plateau_patience,
        )
        result, history = train_cut_model(graph, config, self.random_state)
        self.history_ = history
        return result


class EigenvectorSignCut(_BaseCut):
    """Partition by the sign pattern of the top Laplacian eigenvector."""

    def __init__(self, tol=1e-10, max_iter=10000, random_state=0):
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _solve(self, graph):
        return levs_partition(graph, self.tol, self.max_iter, self.random_state)


class RandomizedRoundingCut(_BaseCut):
    """Low-rank relaxation ascent plus random-hyperplane rounding."""

    def __init__(self, rank=None, ascent_iters=500, rounding_trials=64,
                 random_state=0):
        self.rank = rank
        self.ascent_iters = ascent_iters
        self.rounding_trials = rounding_trials
        self.random_state = random_state

    def _solve(self, graph):
        return gw_partition(graph, self.rank, self.ascent_iters,
                            self.rounding_trials, self.random_state)


class ExhaustiveCut(_BaseCut):
    """Exact optimum by enumeration; only for small graphs."""

    def _solve(self, graph):
        return brute_force_maxcut(graph)


class MaxCutPool(BaseEstimator):
    """Trainable pooling transformer: (graph, X) -> (pooled graph, X').

    ``fit`` optionally trains the internal score network on the cut loss of
    the given graph (``epochs=0`` keeps the random initialization);
    ``transform`` pools a graph with the current scores.
    """

    def __init__(self, ratio=0.5, variant="plain", max_iter=3,
                 hetmp_sizes=DEFAULT_HETMP_SIZES, mlp_sizes=DEFAULT_MLP_SIZES,
                 delta=2.0, lr=8e-4, epochs=0, random_state=0):
        self.ratio = ratio
        self.variant = variant
        self.max_iter = max_iter
        self.hetmp_sizes = hetmp_sizes
        self.mlp_sizes = mlp_sizes
        self.delta = delta
        self.lr = lr
        self.epochs = epochs
        self.random_state = random_state

    def _features(self, graph, X):
        if X is not None:
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2 or X.shape[0] != graph.n:
                raise ValueError(f"X must be ({graph.n}, F), got {X.shape}")
            return X
        if graph.features is not None:
            return graph.features
        return np.ones((graph.n, 1))

    def fit(self, graph, X=None, y=None):
        graph = check_graph(graph)
        X = self._features(graph, X)
        self.layer_ = MaxCutPoolLayer(
            X.shape[1], self.random_state, ratio=self.ratio,
            variant=self.variant, max_iter=self.max_iter,
            hetmp_sizes=tuple(self.hetmp_sizes),
            mlp_sizes=tuple(self.mlp_sizes), delta=self.delta,
        )
        self.n_features_in_ = X.shape[1]
        if self.epochs and graph.weights.sum() > 0:
            optimizer = Adam(self.layer_.parameters(), lr=self.lr)
            scheduler = PlateauScheduler(optimizer)
            prop = propagation_matrix(graph, self.delta)
            for _ in range(self.epochs):
                tape = Tape()
                scores = self.layer_.scorenet(tape, constant(X), graph, prop)
                loss = cut_loss(tape, scores, graph)
                optimizer.zero_grad()
                tape.backward(loss)
                optimizer.step()
                scheduler.step(loss.item())
        return self

    def transform(self, graph, X=None):
        if not hasattr(self, "layer_"):
            raise NotFittedError("call fit() first")
        graph = check_graph(graph)
        X = self._features(graph, X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        out = self.layer_.forward(Tape(), graph, constant(X),
                                  seed=self.random_state)
        self.select_ = out.select
        self.assignment_ = out.assignment
        self.aux_loss_ = out.aux_loss.item()
        return out.pooled_graph, out.pooled_features.values

    def fit_transform(self, graph, X=None, y=None):
        return self.fit(graph, X).transform(graph, X)
