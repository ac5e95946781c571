"""Cut partitions on attributed graphs and a trainable pooling operator.

The functional core lives in the submodules (``graph``, ``datasets``,
``autodiff``, ``nn``, ``maxcut``, ``pool``, ``pipelines``); the
scikit-learn style estimators in :mod:`mcpool.estimators` are the
recommended entry point for composing the solvers with other tooling.
"""

__version__ = "0.1.0"

from . import errors
from .autodiff import Tape, Tensor, constant, parameter, finite_diff_check
from .datasets import (
    Dataset,
    feature_homophily,
    generate_multipartite_dataset,
    load_dataset,
    save_dataset,
)
from .estimators import (
    EigenvectorSignCut,
    ExhaustiveCut,
    MaxCutPool,
    NeuralCut,
    RandomizedRoundingCut,
)
from .graph import (
    GeneratorSpec,
    Graph,
    bipartition_oracle,
    build_graph,
    generate,
    parse_gset,
    sym_norm_laplacian,
    total_edge_weight,
)
from .maxcut import (
    CutModelConfig,
    CutResult,
    brute_force_maxcut,
    cut_loss,
    cut_metrics,
    gw_partition,
    levs_partition,
    round_scores,
    train_cut_model,
)
from .nn import (
    Adam,
    GINLayer,
    HetMPLayer,
    PlateauScheduler,
    ScoreNet,
    glorot_init,
    propagation_matrix,
)
from .pipelines import (
    NodeSplit,
    RunReport,
    TaskConfig,
    run_maxcut_experiment,
    train_graph_classifier,
    train_node_classifier,
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

__all__ = [
    "__version__",
    "errors",
    "Tape", "Tensor", "constant", "parameter", "finite_diff_check",
    "Dataset", "feature_homophily", "generate_multipartite_dataset",
    "load_dataset", "save_dataset",
    "EigenvectorSignCut", "ExhaustiveCut", "MaxCutPool", "NeuralCut",
    "RandomizedRoundingCut",
    "GeneratorSpec", "Graph", "bipartition_oracle", "build_graph", "generate",
    "parse_gset", "sym_norm_laplacian", "total_edge_weight",
    "CutModelConfig", "CutResult", "brute_force_maxcut", "cut_loss",
    "cut_metrics", "gw_partition", "levs_partition", "round_scores",
    "train_cut_model",
    "Adam", "GINLayer", "HetMPLayer", "PlateauScheduler", "ScoreNet",
    "glorot_init", "propagation_matrix",
    "NodeSplit", "RunReport", "TaskConfig", "run_maxcut_experiment",
    "train_graph_classifier", "train_node_classifier",
    "Assignment", "MaxCutPoolLayer", "SelectOutput", "assign_supernodes",
    "connect", "reduce_features", "select_topk", "unpool",
]
