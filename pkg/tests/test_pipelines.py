import numpy as np
import pytest

from mcpool import (
    GeneratorSpec,
    NodeSplit,
    TaskConfig,
    generate,
    generate_multipartite_dataset,
    run_maxcut_experiment,
    train_graph_classifier,
    train_node_classifier,
)
from mcpool.errors import (
    BadMasksError,
    EmptyGraphError,
    InvalidParamsError,
    MissingLabelsError,
    SourceNotFoundError,
)
from mcpool.maxcut import CutModelConfig
from mcpool.pipelines import (
    RESULT_COLUMNS,
    TwoCommunitySpec,
    block_diagonal_union,
    two_community_graph,
)

FAST_CUT = CutModelConfig(gin_width=8, hetmp_sizes=(8, 8), mlp_sizes=(8,),
                          epochs=40, lr=5e-3)
FAST_TASK = TaskConfig(epochs=12, patience=12, lr=2e-3,
                       hetmp_sizes=(8, 8), mlp_sizes=(8,))


class TestBlockDiagonalUnion:
    def test_offsets_segments_and_edges(self):
        graphs = [generate(GeneratorSpec.ring(4)),
                  generate(GeneratorSpec.complete(3))]
        union, offsets, segments = block_diagonal_union(graphs)
        assert union.n == 7
        np.testing.assert_array_equal(offsets, [0, 4])
        np.testing.assert_array_equal(segments, [0] * 4 + [1] * 3)
        dense = union.adjacency.toarray()
        assert dense[:4, 4:].sum() == 0  # no cross-graph edges
        np.testing.assert_allclose(dense[:4, :4],
                                   graphs[0].adjacency.toarray())
        np.testing.assert_allclose(dense[4:, 4:],
                                   graphs[1].adjacency.toarray())


class TestRunMaxcutExperiment:
    def test_row_schema_and_bounds(self):
        rows = run_maxcut_experiment(GeneratorSpec.ring(16),
                                     ["maxcutpool", "levs", "gw"],
                                     [0, 1, 2], FAST_CUT)
        assert len(rows) == 9
        for row in rows:
            assert set(RESULT_COLUMNS) <= set(row)
            assert row["cut_fraction"] <= 1.0
            assert row["n"] == 16
            assert row["undirected_edges"] == 16

    def test_gset_source_echoes_counts(self, tmp_path):
        path = tmp_path / "toy.gset"
        path.write_text("3 2\n1 2 1\n2 3 1\n")
        rows = run_maxcut_experiment(path, ["levs"], [1])
        assert rows[0]["n"] == 3
        assert rows[0]["undirected_edges"] == 2
        assert rows[0]["graph"] == "gset:toy.gset"

    def test_missing_source(self):
        with pytest.raises(SourceNotFoundError):
            run_maxcut_experiment("nowhere.gset", ["levs"], [0])

    def test_oracle_dominance_on_er(self):
        source = GeneratorSpec.erdos_renyi(12, 0.3)
        rows = run_maxcut_experiment(
            source, ["maxcutpool", "levs", "gw", "bruteforce"], [0, 1],
            FAST_CUT, graph_seed=7,
        )
        best = {r["seed"]: r["cut_value"] for r in rows
                if r["method"] == "bruteforce"}
        for row in rows:
            assert row["cut_value"] <= best[row["seed"]] + 1e-9

    def test_unknown_method(self):
        with pytest.raises(InvalidParamsError):
            run_maxcut_experiment(GeneratorSpec.ring(4), ["anneal"], [0])


def tiny_dataset():
    return generate_multipartite_dataset(3, 10, 4, seed=1)


class TestGraphClassifier:
    def test_report_bookkeeping_identity(self):
        rep = train_graph_classifier(tiny_dataset(), FAST_TASK, seed=0)
        beta = rep.meta["beta"]
        for total, task, aux in zip(rep.total_losses, rep.task_losses,
                                    rep.aux_losses[0]):
            assert abs(total - (task + beta * aux)) <= 1e-12

    def test_no_loss_ablation_still_trains_scorenet(self):
        # With beta = 0 the only gradient route into the score network is
        # the score-times-features product; parameters must still move.
        from mcpool import Adam, Tape
        from mcpool.pipelines import GraphClassifier
        ds = tiny_dataset()
        config = TaskConfig(epochs=5, patience=5, lr=2e-3, no_loss=True,
                            hetmp_sizes=(8,), mlp_sizes=(8,))
        model = GraphClassifier(ds.graphs[0].features.shape[1],
                                ds.class_count, config, seed=0)
        before = model.pool.scorenet.snapshot()
        opt = Adam(model.parameters(), lr=2e-3)
        for step in range(5):
            tape = Tape()
            logits, aux, _ = model.forward_batch(tape, ds.graphs[:16],
                                                 (0, step, 0))
            ce = tape.softmax_cross_entropy(logits, ds.graph_labels[:16])
            total = tape.add(ce, tape.scale(aux, config.effective_beta))
            opt.zero_grad()
            tape.backward(total)
            opt.step()
        after = model.pool.scorenet.snapshot()
        moved = [name for name in before
                 if not np.allclose(before[name], after[name])]
        assert moved, "score network never received gradient"
        rep = train_graph_classifier(ds, config, seed=0)
        assert rep.meta["beta"] == 0.0
        assert rep.final_metric is not None

    def test_single_class_flagged_degenerate(self):
        ds = tiny_dataset()
        from mcpool.datasets import Dataset
        one = Dataset(ds.graphs[:10], np.zeros(10, dtype=np.int64), 1)
        rep = train_graph_classifier(one, FAST_TASK, seed=0)
        assert rep.meta["degenerate_single_class"]
        assert rep.final_metric == 1.0

    def test_metric_from_best_checkpoint(self):
        rep = train_graph_classifier(tiny_dataset(), FAST_TASK, seed=1)
        assert rep.val_losses is not None
        assert rep.checkpoint_epoch == int(np.argmin(rep.val_losses))


class TestNodeClassifier:
    def test_two_community_accuracy(self):
        g = two_community_graph(TwoCommunitySpec(20, 0.3, 0.05), seed=0)
        rng = np.random.default_rng(0)
        idx = rng.permutation(g.n)
        split = NodeSplit(idx[:24], idx[24:32], idx[32:])
        config = TaskConfig(epochs=120, patience=40, lr=1e-3,
                            hetmp_sizes=(16, 16, 8, 8), mlp_sizes=(8,))
        rep = train_node_classifier(g, split, config, seed=0)
        assert rep.final_metric >= 0.9

    def test_all_train_disables_validation(self):
        g = two_community_graph(TwoCommunitySpec(8, 0.4, 0.1), seed=1)
        split = NodeSplit(np.arange(g.n), np.array([], dtype=int),
                          np.array([], dtype=int))
        config = TaskConfig(epochs=5, patience=5, hetmp_sizes=(4,),
                            mlp_sizes=(4,))
        rep = train_node_classifier(g, split, config, seed=0)
        assert rep.val_losses is None
        assert rep.final_metric is None
        assert rep.epochs_run == 5

    def test_overlapping_masks_rejected(self):
        g = two_community_graph(TwoCommunitySpec(6, 0.5, 0.1), seed=2)
        split = NodeSplit(np.array([0, 1, 2]), np.array([2, 3]),
                          np.array([4, 5]))
        with pytest.raises(BadMasksError):
            train_node_classifier(g, split, FAST_TASK, seed=0)

    def test_missing_labels_rejected(self):
        g = generate(GeneratorSpec.ring(6))
        split = NodeSplit(np.array([0, 1]), np.array([2]), np.array([3]))
        with pytest.raises(MissingLabelsError):
            train_node_classifier(g, split, FAST_TASK, seed=0)
