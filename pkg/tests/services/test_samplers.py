"""
Tests for the uniform and value samplers and sample-tree construction.
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from sagerl.models.dataset import SyntheticSpec
from sagerl.services.graph_store import NodeIndexError, generate_synthetic
from sagerl.services.samplers import (
    SamplerConfigurationError,
    UniformSampler,
    ValueSampler,
    build_tree,
    partition_neighbors,
    uniform_expand,
    value_expand,
)
from sagerl.services.value import ValueRegressor
from tests.conftest import make_graph, random_edges


class TableScorer:
    """Scores a candidate by a fixed per-node value, whatever the root."""

    fitted = True

    def __init__(self, node_scores):
        self.node_scores = np.asarray(node_scores, dtype=np.float64)

    def bind(self, features):
        return lambda v, u: self.node_scores[u]


class CommunityScorer:
    """Prefers neighbors with the root's label."""

    fitted = True

    def __init__(self, labels):
        self.community = labels.argmax(axis=1)

    def bind(self, features):
        return lambda v, u: np.where(self.community[v] == self.community[u], -1.0, -2.0)


def star_graph(degree):
    """Node 0 joined to nodes 1..degree."""
    return make_graph(degree + 1, [(0, i) for i in range(1, degree + 1)])


def assert_size_law(tree, num_roots):
    size = num_roots
    for k, fanout in enumerate(tree.fanouts, 1):
        size *= fanout
        assert len(tree.layers[k]) == size


def assert_membership(graph, tree):
    for k in range(1, tree.depth + 1):
        parents = tree.layers[k - 1][tree.parent_map(k)]
        for parent, child in zip(parents, tree.layers[k]):
            if graph.degree(parent) == 0:
                assert child == parent
            else:
                assert child in graph.neighbors(parent)


class TestUniformExpand:
    def test_single_neighbor(self, rng):
        graph = star_graph(1)
        assert uniform_expand(graph, np.array([1]), 4, rng).tolist() == [0, 0, 0, 0]

    def test_isolated_node_samples_itself(self, rng):
        graph = make_graph(3, [(0, 1)])
        assert uniform_expand(graph, np.array([2]), 3, rng).tolist() == [2, 2, 2]

    def test_graph_without_edges(self, rng):
        graph = make_graph(3, [])
        assert uniform_expand(graph, np.array([0, 1]), 2, rng).tolist() == [0, 0, 1, 1]

    def test_chi_square_uniformity(self):
        graph = star_graph(10)
        rng = np.random.default_rng(0)
        draws = uniform_expand(graph, np.zeros(100_000, dtype=np.int64), 3, rng)
        counts = np.bincount(draws, minlength=11)[1:]
        assert counts.sum() == 300_000
        _, p_value = chisquare(counts)
        assert p_value > 0.001

    def test_children_grouped_by_parent(self, rng):
        graph = make_graph(6, [(0, 1), (2, 3), (4, 5)])
        children = uniform_expand(graph, np.array([0, 2, 4]), 2, rng)
        assert children.tolist() == [1, 1, 3, 3, 5, 5]


class TestPartitionNeighbors:
    def test_even_split(self, rng):
        groups = partition_neighbors(np.arange(6), 2, rng)
        assert [len(g) for g in groups] == [3, 3]
        assert sorted(np.concatenate(groups).tolist()) == list(range(6))

    def test_balanced_sizes(self, rng):
        groups = partition_neighbors(np.arange(7), 3, rng)
        assert [len(g) for g in groups] == [3, 2, 2]

    def test_fixed_seed_is_reproducible(self):
        a = partition_neighbors(np.arange(20), 4, np.random.default_rng(3))
        b = partition_neighbors(np.arange(20), 4, np.random.default_rng(3))
        assert [g.tolist() for g in a] == [g.tolist() for g in b]


class TestValueExpand:
    def test_unfitted_regressor_rejected(self, rng):
        regressor = ValueRegressor.initialize(4, rng)
        with pytest.raises(SamplerConfigurationError):
            ValueSampler(regressor)

    def test_matches_per_partition_argmax_oracle(self):
        cases = np.random.default_rng(42)
        for case in range(1000):
            degree = int(cases.integers(2, 13))
            fanout = int(cases.integers(1, degree))
            graph = star_graph(degree)
            # coarse scores so ties happen
            scores = np.round(cases.normal(size=degree + 1), 1)
            scorer = TableScorer(scores)

            picked = value_expand(graph, scorer, np.array([0]), fanout, np.random.default_rng(case))

            groups = partition_neighbors(graph.neighbors(0), fanout, np.random.default_rng(case))
            expected = []
            for group in groups:
                best = max(scores[group])
                expected.append(min(int(u) for u in group if scores[u] == best))
            assert picked.tolist() == expected

            for group, chosen in zip(groups, picked):
                assert scores[chosen] >= scores[group].max()

    def test_six_neighbors_two_groups(self):
        graph = star_graph(6)
        scores = np.array([0.0, -3.0, -1.0, -2.0, -1.5, -0.5, -4.0])
        rng = np.random.default_rng(1)
        picked = value_expand(graph, TableScorer(scores), np.array([0]), 2, rng)
        groups = partition_neighbors(graph.neighbors(0), 2, np.random.default_rng(1))
        assert picked.tolist() == [int(g[np.argmax(scores[g])]) for g in groups]
        assert 5 in picked.tolist()

    def test_small_degree_contains_every_neighbor(self, rng):
        graph = star_graph(3)
        picked = value_expand(graph, TableScorer(np.zeros(4)), np.array([0]), 5, rng)
        assert len(picked) == 5
        assert {1, 2, 3} <= set(picked.tolist())

    def test_constant_scores_pick_lowest_id_per_group(self):
        graph = star_graph(9)
        rng_seed = 5
        picked = value_expand(
            graph, TableScorer(np.full(10, -1.0)), np.array([0]), 3, np.random.default_rng(rng_seed)
        )
        groups = partition_neighbors(graph.neighbors(0), 3, np.random.default_rng(rng_seed))
        assert picked.tolist() == [int(g.min()) for g in groups]

    def test_isolated_node_samples_itself(self, rng):
        graph = make_graph(3, [(0, 1)])
        picked = value_expand(graph, TableScorer(np.zeros(3)), np.array([2]), 2, rng)
        assert picked.tolist() == [2, 2]

    def test_mixed_frontier_keeps_parent_blocks(self, rng):
        graph = make_graph(
            12, [(0, i) for i in range(1, 8)] + [(8, 9)], feature_dim=3
        )
        frontier = np.array([0, 8, 10, 0])
        picked = value_expand(graph, TableScorer(-np.arange(12.0)), frontier, 3, rng)
        blocks = picked.reshape(4, 3)
        assert set(blocks[0].tolist()) <= set(range(1, 8))
        assert blocks[1].tolist() == [9, 9, 9]
        assert blocks[2].tolist() == [10, 10, 10]
        assert len(set(blocks[3].tolist())) == 3

    def test_regressor_scorer(self, rng):
        graph = star_graph(8)
        regressor = ValueRegressor.from_weights(np.ones(2 * graph.feature_dim), 0.0)
        picked = ValueSampler(regressor).expand(graph, np.array([0, 0]), 2, rng)
        assert len(picked) == 4
        assert set(picked.tolist()) <= set(range(1, 9))


class TestBuildTree:
    def test_fanouts_thirty_thirty(self, rng):
        graph = make_graph(100, random_edges(100, 600, seed=1))
        tree = build_tree(graph, [0], UniformSampler(), [30, 30], rng)
        assert len(tree.layers[1]) == 30
        assert len(tree.layers[2]) == 900

    def test_single_hop_on_path_end(self, path_graph, rng):
        tree = build_tree(path_graph, [0], UniformSampler(), [1], rng)
        assert tree.layers[1].tolist() == [1]

    @pytest.mark.parametrize("fanouts", [[3], [4, 2], [3, 2, 2]])
    def test_size_law_and_membership_for_both_samplers(self, fanouts, rng):
        graph = make_graph(40, random_edges(40, 70, seed=4))
        roots = np.arange(0, 40, 3)
        scorer = TableScorer(np.random.default_rng(0).normal(size=40))
        for sampler in (UniformSampler(), ValueSampler(scorer)):
            tree = build_tree(graph, roots, sampler, fanouts, rng)
            assert_size_law(tree, len(roots))
            assert_membership(graph, tree)

    def test_fixed_seed_gives_identical_tree(self):
        graph = make_graph(40, random_edges(40, 100, seed=8))
        scorer = TableScorer(np.arange(40.0))
        trees = [
            build_tree(graph, [1, 2, 3], ValueSampler(scorer), [3, 2], np.random.default_rng(9))
            for _ in range(2)
        ]
        for a, b in zip(trees[0].layers, trees[1].layers):
            np.testing.assert_array_equal(a, b)

    def test_truncate_and_first_hop(self, rng):
        graph = make_graph(20, random_edges(20, 60, seed=2))
        tree = build_tree(graph, [4, 5], UniformSampler(), [3, 2], rng)
        short = tree.truncate(1)
        assert short.depth == 1
        assert len(short.layers) == 2
        np.testing.assert_array_equal(tree.first_hop(1), tree.layers[1][3:6])
        assert tree.parent_map(2).tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]

    def test_out_of_range_root(self, path_graph, rng):
        with pytest.raises(NodeIndexError):
            build_tree(path_graph, [5], UniformSampler(), [1], rng)

    def test_value_tree_prefers_same_community(self):
        graph = generate_synthetic(SyntheticSpec(num_nodes=600, seed=2))
        roots = np.arange(100)
        scorer = CommunityScorer(graph.labels)
        community = graph.labels.argmax(axis=1)

        def same_fraction(sampler):
            tree = build_tree(graph, roots, sampler, [5], np.random.default_rng(0))
            parents = tree.roots[tree.parent_map(1)]
            return np.mean(community[parents] == community[tree.layers[1]])

        assert same_fraction(ValueSampler(scorer)) > same_fraction(UniformSampler())
