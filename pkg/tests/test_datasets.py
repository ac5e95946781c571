import itertools

import numpy as np
import pytest

from mcpool import (
    Dataset,
    build_graph,
    feature_homophily,
    generate_multipartite_dataset,
    load_dataset,
    save_dataset,
)
from mcpool.errors import (
    InvalidParamsError,
    MissingFeaturesError,
    ZeroNormFeatureError,
)


def is_complete_multipartite(g, colors) -> bool:
    """Exhaustive oracle: edge iff the two endpoints have different colors."""
    dense = g.adjacency.toarray()
    for u, v in itertools.combinations(range(g.n), 2):
        want = colors[u] != colors[v]
        if bool(dense[u, v]) != want:
            return False
    return True


class TestMultipartiteGenerator:
    def test_three_center_structure(self):
        ds = generate_multipartite_dataset(3, 1, 2, noise_scale=0.1, seed=7)
        assert len(ds) == 3
        for g in ds.graphs:
            assert is_complete_multipartite(g, g.labels)
        assert sorted(ds.graph_labels) == [0, 1, 2]

    def test_minimal_two_center(self):
        ds = generate_multipartite_dataset(2, 1, 1, noise_scale=0.0, seed=0)
        for g in ds.graphs:
            assert g.n == 2
            assert g.num_undirected_edges == 1
            assert g.labels[0] != g.labels[1]

    def test_feature_layout(self):
        ds = generate_multipartite_dataset(4, 2, 3, seed=1)
        for g in ds.graphs:
            assert g.features.shape == (g.n, 2 + 4)
            onehot = g.features[:, 2:]
            np.testing.assert_array_equal(onehot.sum(axis=1), np.ones(g.n))
            np.testing.assert_array_equal(onehot.argmax(axis=1), g.labels)

    def test_inter_cluster_edge_count(self):
        ds = generate_multipartite_dataset(4, 3, 4, seed=3)
        for g in ds.graphs:
            sizes = np.bincount(g.labels, minlength=4)
            expected = sum(sizes[a] * sizes[b]
                           for a, b in itertools.combinations(range(4), 2))
            assert g.num_undirected_edges == expected

    def test_every_class_has_graphs(self):
        ds = generate_multipartite_dataset(5, 2, 3, seed=2)
        counts = np.bincount(ds.graph_labels, minlength=5)
        np.testing.assert_array_equal(counts, [2] * 5)

    def test_determinism(self):
        a = generate_multipartite_dataset(3, 2, 4, seed=9)
        b = generate_multipartite_dataset(3, 2, 4, seed=9)
        for ga, gb in zip(a.graphs, b.graphs):
            np.testing.assert_array_equal(ga.features, gb.features)

    def test_invalid_params(self):
        with pytest.raises(InvalidParamsError):
            generate_multipartite_dataset(1, 1, 1)
        with pytest.raises(InvalidParamsError):
            generate_multipartite_dataset(3, 0, 1)
        with pytest.raises(InvalidParamsError):
            generate_multipartite_dataset(3, 1, 0)


class TestFeatureHomophily:
    def _single_k2(self, x0, x1):
        g = build_graph([(0, 1, 1.0)], 2, features=np.array([x0, x1], float))
        return Dataset([g], np.array([0]), 1)

    def test_identical_rows(self):
        assert feature_homophily(self._single_k2([1, 0], [1, 0])) == pytest.approx(1.0)

    def test_orthogonal_rows(self):
        assert feature_homophily(self._single_k2([1, 0], [0, 1])) == pytest.approx(0.0)

    def test_opposite_rows_absolute_value(self):
        assert feature_homophily(self._single_k2([1, 0], [-1, 0])) == pytest.approx(1.0)

    def test_onehot_multipartite_is_zero(self):
        ds = generate_multipartite_dataset(3, 2, 3, seed=4)
        onehot_only = []
        for g in ds.graphs:
            onehot_only.append(g.with_features(g.features[:, 2:]))
        stripped = Dataset(onehot_only, ds.graph_labels, ds.class_count)
        assert feature_homophily(stripped) == pytest.approx(0.0)

    def test_missing_features(self):
        g = build_graph([(0, 1, 1.0)], 2)
        with pytest.raises(MissingFeaturesError):
            feature_homophily(Dataset([g], np.array([0]), 1))

    def test_zero_norm_feature(self):
        ds = self._single_k2([0, 0], [1, 0])
        with pytest.raises(ZeroNormFeatureError):
            feature_homophily(ds)


class TestDatasetFile:
    def test_round_trip(self, tmp_path):
        ds = generate_multipartite_dataset(3, 2, 3, seed=11)
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.class_count == 3
        assert len(back) == len(ds)
        np.testing.assert_array_equal(back.graph_labels, ds.graph_labels)
        for ga, gb in zip(ds.graphs, back.graphs):
            assert ga.n == gb.n
            np.testing.assert_array_equal(ga.indices, gb.indices)
            np.testing.assert_allclose(ga.features, gb.features)

    def test_header_line(self, tmp_path):
        ds = generate_multipartite_dataset(2, 1, 1, seed=0)
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        first = path.read_text().splitlines()[0]
        assert '"format": "mcpool-ds"' in first
        assert '"version": 1' in first
        assert '"classes": 2' in first
