"""
Tests for the graph store: CSR invariants, dataset I/O, training view and
the synthetic generator.
"""

import json

import numpy as np
import pytest

from sagerl.models.dataset import SyntheticSpec
from sagerl.services.graph_store import (
    TEST,
    TRAIN,
    DatasetFormatError,
    NodeIndexError,
    generate_synthetic,
    load_dataset,
    neighbors,
    restrict_to_train,
    write_dataset,
)
from tests.conftest import make_graph, random_edges


def write_raw_dataset(
    path,
    num_nodes=3,
    edges="0 1\n1 2\n",
    features=None,
    labels=None,
    split=None,
    label_mode="single",
    num_labels=2,
    feature_dim=2,
):
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": num_nodes,
        "feature_dim": feature_dim,
        "num_labels": num_labels,
        "label_mode": label_mode,
    }
    (path / "meta.json").write_text(json.dumps(meta))
    (path / "edges.txt").write_text(edges)
    if features is None:
        features = "".join("0.5\t1.5\n" for _ in range(num_nodes))
    (path / "features.tsv").write_text(features)
    if labels is None:
        labels = "".join(f"{i % num_labels}\n" for i in range(num_nodes))
    (path / "labels.tsv").write_text(labels)
    if split is None:
        split = "".join("train\n" for _ in range(num_nodes))
    (path / "split.tsv").write_text(split)
    return path


def edge_set(graph):
    return {tuple(edge) for edge in graph.edge_list().tolist()}


class TestGraph:
    def test_path_graph_csr(self, path_graph):
        assert path_graph.csr_offsets.tolist() == [0, 1, 3, 4]
        assert path_graph.degree(1) == 2
        assert sorted(neighbors(path_graph, 1).tolist()) == [0, 2]

    def test_isolated_node_has_empty_view(self):
        graph = make_graph(4, [(0, 1)])
        assert len(graph.neighbors(3)) == 0
        assert graph.degree(3) == 0

    def test_out_of_range_node(self, path_graph):
        with pytest.raises(NodeIndexError):
            neighbors(path_graph, 3)
        with pytest.raises(IndexError):
            path_graph.degree(-1)

    def test_csr_invariants_and_symmetry(self):
        edges = random_edges(50, 200, seed=3)
        graph = make_graph(50, edges)
        offsets = graph.csr_offsets
        assert np.all(np.diff(offsets) >= 0)
        assert offsets[-1] == len(graph.csr_targets)
        for v in range(50):
            for u in graph.neighbors(v):
                assert u != v
                assert v in graph.neighbors(u)

    def test_neighbors_match_brute_force_scan(self):
        edges = random_edges(50, 150, seed=11)
        graph = make_graph(50, edges)
        for v in range(50):
            expected = set()
            for a, b in edges:
                if a == b:
                    continue
                if a == v:
                    expected.add(int(b))
                if b == v:
                    expected.add(int(a))
            assert set(graph.neighbors(v).tolist()) == expected
            assert graph.degree(v) == len(expected)

    def test_duplicates_and_self_loops_removed(self):
        graph = make_graph(3, [(0, 1), (1, 0), (0, 1), (2, 2)])
        assert graph.num_edges == 1
        assert graph.degree(2) == 0

    def test_neighbors_view_is_read_only(self, path_graph):
        view = path_graph.neighbors(1)
        with pytest.raises(ValueError):
            view[0] = 5


class TestLoadDataset:
    def test_path_graph(self, tmp_path):
        graph, meta = load_dataset(write_raw_dataset(tmp_path / "ds"))
        assert graph.csr_offsets.tolist() == [0, 1, 3, 4]
        assert meta.num_edges == 2
        assert meta.label_mode == "single"
        assert graph.features.dtype == np.float64
        np.testing.assert_array_equal(graph.labels.sum(axis=1), np.ones(3))

    def test_empty_edge_file(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", num_nodes=5, edges="")
        graph, _ = load_dataset(path)
        assert graph.degrees().tolist() == [0, 0, 0, 0, 0]

    def test_missing_file(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds")
        (path / "split.tsv").unlink()
        with pytest.raises(DatasetFormatError, match="split.tsv"):
            load_dataset(path)

    def test_node_id_out_of_range_names_line(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", edges="0 1\n1 7\n")
        with pytest.raises(DatasetFormatError, match=r"edges.txt:2: node id 7 out of range"):
            load_dataset(path)

    def test_single_label_row_with_two_ids(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", labels="0\n0 1\n1\n")
        with pytest.raises(DatasetFormatError, match=r"labels.tsv:2"):
            load_dataset(path)

    def test_feature_row_count_mismatch(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", features="1\t2\n3\t4\n")
        with pytest.raises(DatasetFormatError, match="features.tsv"):
            load_dataset(path)

    def test_feature_width_mismatch(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", features="1\t2\n3\n5\t6\n")
        with pytest.raises(DatasetFormatError, match=r"features.tsv:2: expected 2 values"):
            load_dataset(path)

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf", "1e39"])
    def test_non_finite_feature_names_line(self, tmp_path, bad):
        path = write_raw_dataset(tmp_path / "ds", features=f"1\t2\n3\t4\n5\t{bad}\n")
        with pytest.raises(DatasetFormatError, match=r"features.tsv:3: non-finite"):
            load_dataset(path)

    def test_non_finite_binary_feature(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds")
        binary = np.arange(6, dtype="<f4")
        binary[3] = np.nan
        binary.tofile(path / "features.f32")
        with pytest.raises(DatasetFormatError, match=r"features.f32: non-finite value in row 1"):
            load_dataset(path)

    def test_unknown_split_tag(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds", split="train\nholdout\ntest\n")
        with pytest.raises(DatasetFormatError, match=r"split.tsv:2"):
            load_dataset(path)

    def test_multi_label_rows_may_be_empty(self, tmp_path):
        path = write_raw_dataset(
            tmp_path / "ds", label_mode="multi", num_labels=3, labels="0 2\n\n1\n"
        )
        graph, meta = load_dataset(path)
        assert meta.label_mode == "multi"
        assert graph.labels.tolist() == [[1, 0, 1], [0, 0, 0], [0, 1, 0]]

    def test_binary_features_take_precedence(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds")
        binary = np.arange(6, dtype="<f4")
        binary.tofile(path / "features.f32")
        graph, _ = load_dataset(path)
        np.testing.assert_array_equal(graph.features, binary.reshape(3, 2))

    def test_binary_features_wrong_size(self, tmp_path):
        path = write_raw_dataset(tmp_path / "ds")
        np.arange(5, dtype="<f4").tofile(path / "features.f32")
        with pytest.raises(DatasetFormatError, match="features.f32"):
            load_dataset(path)

    def test_loading_symmetric_edge_list_changes_nothing(self, tmp_path):
        one_way = write_raw_dataset(tmp_path / "a", edges="0 1\n1 2\n")
        both_ways = write_raw_dataset(tmp_path / "b", edges="0 1\n1 0\n1 2\n2 1\n")
        g1, _ = load_dataset(one_way)
        g2, _ = load_dataset(both_ways)
        np.testing.assert_array_equal(g1.csr_offsets, g2.csr_offsets)
        np.testing.assert_array_equal(g1.csr_targets, g2.csr_targets)


class TestRoundTrip:
    @pytest.mark.parametrize("label_mode", ["single", "multi"])
    def test_write_then_load_is_identical(self, tmp_path, label_mode):
        rng = np.random.default_rng(5)
        features = rng.normal(size=(40, 6)).astype(np.float32).astype(np.float64)
        split = rng.integers(0, 3, size=40).astype(np.uint8)
        graph = make_graph(
            40, random_edges(40, 90, seed=5), features=features, split=split, label_mode=label_mode
        )
        write_dataset(graph, tmp_path / "ds")
        loaded, meta = load_dataset(tmp_path / "ds")

        np.testing.assert_array_equal(loaded.csr_offsets, graph.csr_offsets)
        np.testing.assert_array_equal(loaded.csr_targets, graph.csr_targets)
        np.testing.assert_array_equal(loaded.features, graph.features)
        np.testing.assert_array_equal(loaded.labels, graph.labels)
        np.testing.assert_array_equal(loaded.split, graph.split)
        assert meta.label_mode == label_mode

    def test_binary_features_written_on_request(self, tmp_path):
        graph = make_graph(5, [(0, 1)])
        write_dataset(graph, tmp_path / "ds", binary_features=True)
        assert (tmp_path / "ds" / "features.f32").stat().st_size == 5 * 4 * 4


class TestRestrictToTrain:
    def test_all_train_keeps_adjacency(self):
        graph = make_graph(20, random_edges(20, 50))
        view = restrict_to_train(graph)
        np.testing.assert_array_equal(view.csr_offsets, graph.csr_offsets)
        np.testing.assert_array_equal(view.csr_targets, graph.csr_targets)

    def test_star_with_test_center(self):
        split = np.array([TEST, TRAIN, TRAIN, TRAIN, TRAIN], dtype=np.uint8)
        graph = make_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)], split=split)
        view = restrict_to_train(graph)
        assert view.degrees().tolist() == [0, 0, 0, 0, 0]
        assert view.features is graph.features

    def test_matches_edge_list_filter(self):
        rng = np.random.default_rng(9)
        split = rng.integers(0, 3, size=60).astype(np.uint8)
        graph = make_graph(60, random_edges(60, 200, seed=9), split=split)
        expected = {
            (a, b) for a, b in edge_set(graph) if split[a] == TRAIN and split[b] == TRAIN
        }
        assert edge_set(restrict_to_train(graph)) == expected

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        split = rng.integers(0, 3, size=60).astype(np.uint8)
        graph = make_graph(60, random_edges(60, 200, seed=2), split=split)
        once = restrict_to_train(graph)
        twice = restrict_to_train(once)
        np.testing.assert_array_equal(once.csr_offsets, twice.csr_offsets)
        np.testing.assert_array_equal(once.csr_targets, twice.csr_targets)


class TestGenerateSynthetic:
    def same_community_fraction(self, graph):
        community = graph.labels.argmax(axis=1)
        edges = graph.edge_list()
        return float(np.mean(community[edges[:, 0]] == community[edges[:, 1]]))

    def test_full_informative_fraction_links_only_communities(self):
        graph = generate_synthetic(SyntheticSpec(num_nodes=400, informative_fraction=1.0))
        assert self.same_community_fraction(graph) == 1.0

    def test_same_seed_is_bit_identical(self):
        spec = SyntheticSpec(num_nodes=300, seed=3)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        np.testing.assert_array_equal(a.csr_targets, b.csr_targets)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.split, b.split)

    def test_measured_fraction_close_to_target(self):
        graph = generate_synthetic(SyntheticSpec(num_nodes=2000, informative_fraction=0.5))
        assert abs(self.same_community_fraction(graph) - 0.5) < 0.03

    def test_graph_invariants(self):
        spec = SyntheticSpec(num_nodes=500, num_communities=5, feature_dim=8, seed=1)
        graph = generate_synthetic(spec)
        assert graph.features.shape == (500, 8)
        np.testing.assert_array_equal(graph.labels.sum(axis=1), np.ones(500))
        assert np.all(graph.csr_targets != np.repeat(np.arange(500), graph.degrees()))
        train = len(graph.nodes_in("train"))
        assert train == 350
        assert abs(graph.degrees().mean() - spec.mean_degree) < 2.0

    def informative_mask(self, graph):
        # Only uninformative nodes carry cross-community edges
        community = graph.labels.argmax(axis=1)
        edges = graph.edge_list()
        cross = edges[community[edges[:, 0]] != community[edges[:, 1]]]
        mask = np.ones(graph.num_nodes, dtype=bool)
        mask[cross.ravel()] = False
        return mask, community

    def test_uninformative_features_ignore_community(self):
        graph = generate_synthetic(SyntheticSpec(num_nodes=2000, signal_scale=1.0, seed=5))
        informative, community = self.informative_mask(graph)

        def community_means(mask):
            return np.array(
                [graph.features[mask & (community == c)].mean(axis=0) for c in range(4)]
            )

        def pairwise(means):
            return [np.linalg.norm(a - b) for i, a in enumerate(means) for b in means[i + 1 :]]

        assert max(pairwise(community_means(~informative))) < 1.5
        assert min(pairwise(community_means(informative))) > 3.0

    def test_informativeness_is_linear_in_features(self):
        graph = generate_synthetic(SyntheticSpec(num_nodes=2000, seed=7))
        informative, _ = self.informative_mask(graph)
        inf_mean = graph.features[informative].mean(axis=0)
        uninf_mean = graph.features[~informative].mean(axis=0)

        direction = inf_mean - uninf_mean
        threshold = direction @ (inf_mean + uninf_mean) / 2
        predicted = graph.features @ direction > threshold
        assert np.mean(predicted == informative) > 0.85

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(informative_fraction=1.5)
