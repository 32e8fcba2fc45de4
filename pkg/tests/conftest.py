"""
Shared fixtures: small hand-built graphs, random graphs and configs.
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pytest

from sagerl.core.config import reset_settings
from sagerl.services.graph_store import Graph, build_csr


def make_graph(
    num_nodes: int,
    edges: Sequence[Tuple[int, int]],
    features: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    split: Optional[np.ndarray] = None,
    num_labels: int = 3,
    label_mode: str = "single",
    feature_dim: int = 4,
    seed: int = 0,
) -> Graph:
    """Build a Graph from an edge list, filling unspecified parts randomly."""
    rng = np.random.default_rng(seed)
    edge_array = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    offsets, targets = build_csr(num_nodes, edge_array[:, 0], edge_array[:, 1])
    if features is None:
        features = rng.normal(size=(num_nodes, feature_dim))
    if labels is None:
        labels = np.zeros((num_nodes, num_labels))
        if label_mode == "single":
            labels[np.arange(num_nodes), rng.integers(0, num_labels, num_nodes)] = 1.0
        else:
            labels = (rng.random((num_nodes, num_labels)) < 0.4).astype(np.float64)
    if split is None:
        split = np.zeros(num_nodes, dtype=np.uint8)
    return Graph(
        num_nodes=num_nodes,
        csr_offsets=offsets,
        csr_targets=targets,
        features=np.asarray(features, dtype=np.float64),
        labels=labels,
        split=np.asarray(split, dtype=np.uint8),
        label_mode=label_mode,
    )


def random_edges(num_nodes: int, num_edges: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, num_nodes, size=(num_edges, 2))


@pytest.fixture(autouse=True)
def fresh_settings():
    """Drop cached settings around every test."""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def path_graph() -> Graph:
    """0 - 1 - 2"""
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def graph_factory() -> Callable[..., Graph]:
    return make_graph


@pytest.fixture
def random_graph() -> Graph:
    """30 nodes, about 80 edges, mixed split, M=7, C=3."""
    rng = np.random.default_rng(7)
    split = rng.choice([0, 1, 2], size=30, p=[0.6, 0.2, 0.2]).astype(np.uint8)
    return make_graph(30, random_edges(30, 80, seed=7), split=split, feature_dim=7, seed=7)
