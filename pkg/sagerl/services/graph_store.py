"""
Graph storage for sagerl.

This module holds the immutable CSR graph used by every sampler and model,
reads and writes the on-disk dataset directory format, builds the
training-only view used by the inductive protocol, and generates the
planted-informative-neighbor synthetic graphs used for desk-scale runs.

Dataset directory layout (UTF-8, LF line endings):
    meta.json      {"num_nodes", "feature_dim", "num_labels", "label_mode"}
    edges.txt      one "a b" pair of 0-based ids per line
    features.tsv   num_nodes lines of feature_dim tab-separated floats
    features.f32   optional row-major little-endian float32 block (wins over TSV)
    labels.tsv     single: one label id per line; multi: space-separated ids
    split.tsv      train / val / test per line
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError

from sagerl.models.dataset import DatasetMeta, SyntheticSpec

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
SPLIT_CODES = {name: code for code, name in enumerate(SPLIT_NAMES)}
TRAIN, VAL, TEST = 0, 1, 2


class DatasetFormatError(Exception):
    """
    Raised when a dataset directory does not match the documented format.

    The message names the file and, where one applies, the 1-based line:
        edges.txt:17: node id 20000 out of range [0, 19717)
    """

    pass


class NodeIndexError(IndexError):
    """Raised when a node id lies outside [0, num_nodes)."""

    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Immutable undirected graph in CSR form with node features, labels and split.

    Attributes:
        num_nodes: |V|
        csr_offsets: int64 array of length num_nodes + 1
        csr_targets: int64 neighbor ids; row v is csr_targets[offsets[v]:offsets[v+1]]
        features: |V| x M float64 matrix (float32 values promoted)
        labels: |V| x C 0/1 matrix (one-hot in single mode, multi-hot in multi mode)
        split: uint8 per-node tag, 0 train / 1 val / 2 test
        label_mode: "single" or "multi"
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    label_mode: str = "single"

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_labels(self) -> int:
        return int(self.labels.shape[1])

    @property
    def num_edges(self) -> int:
        """Undirected edge count (each stored pair counted once)."""
        return int(len(self.csr_targets) // 2)

    def _check_node(self, v: int) -> int:
        if not 0 <= v < self.num_nodes:
            raise NodeIndexError(f"node id {v} out of range [0, {self.num_nodes})")
        return int(v)

    def neighbors(self, v: int) -> np.ndarray:
        """Return the CSR slice of v's neighbors (a read-only view)."""
        v = self._check_node(v)
        view = self.csr_targets[self.csr_offsets[v] : self.csr_offsets[v + 1]]
        view.flags.writeable = False
        return view

    def degree(self, v: int) -> int:
        v = self._check_node(v)
        return int(self.csr_offsets[v + 1] - self.csr_offsets[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def nodes_in(self, split: str) -> np.ndarray:
        """Node ids tagged with the given split name, ascending."""
        return np.flatnonzero(self.split == SPLIT_CODES[split])

    def edge_list(self) -> np.ndarray:
        """Each undirected edge once as an (E, 2) array with a < b."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        keep = src < self.csr_targets
        return np.stack([src[keep], self.csr_targets[keep]], axis=1)

    def meta(self) -> DatasetMeta:
        return DatasetMeta(
            num_nodes=self.num_nodes,
            feature_dim=self.feature_dim,
            num_labels=self.num_labels,
            label_mode=self.label_mode,
            num_edges=self.num_edges,
        )


def neighbors(graph: Graph, v: int) -> np.ndarray:
    """
    Neighbors of v as a CSR view; length equals degree(v).

    Raises:
        NodeIndexError: If v is out of range
    """
    return graph.neighbors(v)


def build_csr(num_nodes: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Build symmetric CSR arrays from an edge list.

    Self-loops are dropped, both directions are inserted and duplicates
    collapse. Rows come out sorted by neighbor id.

    Args:
        num_nodes: Node count
        src: Edge source ids
        dst: Edge target ids

    Returns:
        (csr_offsets, csr_targets) as int64 arrays
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    loops = src == dst
    src, dst = src[~loops], dst[~loops]

    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    adjacency = sp.coo_matrix(
        (np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(num_nodes, num_nodes)
    ).tocsr()
    adjacency.sum_duplicates()
    adjacency.sort_indices()
    return adjacency.indptr.astype(np.int64), adjacency.indices.astype(np.int64)


def restrict_to_train(graph: Graph) -> Graph:
    """
    Training view of a graph for the inductive protocol.

    Every edge touching a val or test node is removed; feature, label and
    split rows are shared with the input graph, so held-out nodes are present
    but unreachable.

    Args:
        graph: Full graph

    Returns:
        Graph whose adjacency only links train nodes to train nodes
    """
    is_train = graph.split == TRAIN
    src = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), graph.degrees())
    keep = is_train[src] & is_train[graph.csr_targets]

    counts = np.bincount(src[keep], minlength=graph.num_nodes)
    offsets = np.zeros(graph.num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    return Graph(
        num_nodes=graph.num_nodes,
        csr_offsets=offsets,
        csr_targets=graph.csr_targets[keep],
        features=graph.features,
        labels=graph.labels,
        split=graph.split,
        label_mode=graph.label_mode,
    )


# =============================================================================
# Dataset directory I/O
# =============================================================================


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetFormatError(f"{path.name}: missing file in {path.parent}")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _read_meta(dir_path: Path) -> DatasetMeta:
    path = dir_path / "meta.json"
    if not path.is_file():
        raise DatasetFormatError(f"meta.json: missing file in {dir_path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        return DatasetMeta.model_validate(raw)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"meta.json:{e.lineno}: invalid JSON: {e.msg}") from e
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise DatasetFormatError(f"meta.json:1: field '{field}': {first['msg']}") from e


def _read_edges(dir_path: Path, num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    lines = _read_lines(dir_path / "edges.txt")
    src = np.empty(len(lines), dtype=np.int64)
    dst = np.empty(len(lines), dtype=np.int64)
    count = 0
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise DatasetFormatError(
                f"edges.txt:{lineno}: expected two node ids, found {len(parts)} fields"
            )
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise DatasetFormatError(f"edges.txt:{lineno}: non-integer node id") from e
        for node in (a, b):
            if not 0 <= node < num_nodes:
                raise DatasetFormatError(
                    f"edges.txt:{lineno}: node id {node} out of range [0, {num_nodes})"
                )
        src[count], dst[count] = a, b
        count += 1
    return src[:count], dst[:count]


def _read_features(dir_path: Path, meta: DatasetMeta) -> np.ndarray:
    binary = dir_path / "features.f32"
    if binary.is_file():
        flat = np.fromfile(binary, dtype="<f4")
        expected = meta.num_nodes * meta.feature_dim
        if flat.size != expected:
            raise DatasetFormatError(
                f"features.f32: expected {expected} float32 values "
                f"({meta.num_nodes} x {meta.feature_dim}), found {flat.size}"
            )
        features = flat.reshape(meta.num_nodes, meta.feature_dim)
        bad_rows = np.flatnonzero(~np.isfinite(features).all(axis=1))
        if len(bad_rows):
            raise DatasetFormatError(
                f"features.f32: non-finite value in row {int(bad_rows[0])} (0-based node id)"
            )
        return features.astype(np.float64)

    lines = _read_lines(dir_path / "features.tsv")
    if len(lines) != meta.num_nodes:
        raise DatasetFormatError(
            f"features.tsv:{len(lines)}: found {len(lines)} feature rows, "
            f"expected num_nodes={meta.num_nodes}"
        )
    features = np.empty((meta.num_nodes, meta.feature_dim), dtype=np.float32)
    for lineno, line in enumerate(lines, 1):
        parts = line.split("\t")
        if len(parts) != meta.feature_dim:
            raise DatasetFormatError(
                f"features.tsv:{lineno}: expected {meta.feature_dim} values, found {len(parts)}"
            )
        try:
            features[lineno - 1] = np.asarray(parts, dtype=np.float64)
        except ValueError as e:
            raise DatasetFormatError(f"features.tsv:{lineno}: non-numeric feature value") from e
        if not np.isfinite(features[lineno - 1]).all():
            raise DatasetFormatError(
                f"features.tsv:{lineno}: non-finite feature value (nan, inf or float32 overflow)"
            )
    return features.astype(np.float64)


def _read_labels(dir_path: Path, meta: DatasetMeta) -> np.ndarray:
    lines = _read_lines(dir_path / "labels.tsv")
    if len(lines) != meta.num_nodes:
        raise DatasetFormatError(
            f"labels.tsv:{len(lines)}: found {len(lines)} label rows, "
            f"expected num_nodes={meta.num_nodes}"
        )
    labels = np.zeros((meta.num_nodes, meta.num_labels), dtype=np.float64)
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if meta.label_mode == "single" and len(parts) != 1:
            raise DatasetFormatError(
                f"labels.tsv:{lineno}: single-label mode needs exactly one label id, "
                f"found {len(parts)}"
            )
        for token in parts:
            try:
                label = int(token)
            except ValueError as e:
                raise DatasetFormatError(f"labels.tsv:{lineno}: non-integer label id") from e
            if not 0 <= label < meta.num_labels:
                raise DatasetFormatError(
                    f"labels.tsv:{lineno}: label id {label} out of range [0, {meta.num_labels})"
                )
            labels[lineno - 1, label] = 1.0
    return labels


def _read_split(dir_path: Path, num_nodes: int) -> np.ndarray:
    lines = _read_lines(dir_path / "split.tsv")
    if len(lines) != num_nodes:
        raise DatasetFormatError(
            f"split.tsv:{len(lines)}: found {len(lines)} rows, expected num_nodes={num_nodes}"
        )
    split = np.empty(num_nodes, dtype=np.uint8)
    for lineno, line in enumerate(lines, 1):
        tag = line.strip()
        if tag not in SPLIT_CODES:
            raise DatasetFormatError(
                f"split.tsv:{lineno}: unknown split tag '{tag}' (expected train/val/test)"
            )
        split[lineno - 1] = SPLIT_CODES[tag]
    return split


def load_dataset(dir_path: str | Path) -> tuple[Graph, DatasetMeta]:
    """
    Load a dataset directory into a Graph.

    Edges are symmetrized, duplicates collapsed and self-loops stripped;
    isolated nodes are kept with degree 0.

    Args:
        dir_path: Dataset directory

    Returns:
        (Graph, DatasetMeta) with num_edges filled in

    Raises:
        DatasetFormatError: On a missing file or any malformed line
    """
    dir_path = Path(dir_path)
    logger.info(f"Loading dataset from {dir_path}")

    meta = _read_meta(dir_path)
    src, dst = _read_edges(dir_path, meta.num_nodes)
    offsets, targets = build_csr(meta.num_nodes, src, dst)

    graph = Graph(
        num_nodes=meta.num_nodes,
        csr_offsets=offsets,
        csr_targets=targets,
        features=_read_features(dir_path, meta),
        labels=_read_labels(dir_path, meta),
        split=_read_split(dir_path, meta.num_nodes),
        label_mode=meta.label_mode,
    )
    loaded_meta = graph.meta()
    logger.info(
        f"Loaded {loaded_meta.num_nodes} nodes, {loaded_meta.num_edges} edges, "
        f"M={loaded_meta.feature_dim}, C={loaded_meta.num_labels} ({loaded_meta.label_mode})"
    )
    return graph, loaded_meta


def write_dataset(graph: Graph, dir_path: str | Path, binary_features: bool = False) -> None:
    """
    Write a Graph in the dataset directory format.

    Features are written as float32 with 9 significant digits, which reloads
    to the same float32 values.

    Args:
        graph: Graph to write
        dir_path: Target directory (created if needed)
        binary_features: Also write features.f32
    """
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)

    meta = graph.meta().model_dump(exclude={"num_edges"})
    (dir_path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    edges = graph.edge_list()
    with open(dir_path / "edges.txt", "w", encoding="utf-8", newline="\n") as f:
        for a, b in edges:
            f.write(f"{a} {b}\n")

    features32 = graph.features.astype(np.float32)
    with open(dir_path / "features.tsv", "w", encoding="utf-8", newline="\n") as f:
        np.savetxt(f, features32, delimiter="\t", fmt="%.9g")
    if binary_features:
        features32.astype("<f4").tofile(dir_path / "features.f32")

    with open(dir_path / "labels.tsv", "w", encoding="utf-8", newline="\n") as f:
        for row in graph.labels:
            f.write(" ".join(str(i) for i in np.flatnonzero(row)) + "\n")

    with open(dir_path / "split.tsv", "w", encoding="utf-8", newline="\n") as f:
        for code in graph.split:
            f.write(SPLIT_NAMES[code] + "\n")

    logger.info(f"Wrote dataset ({graph.num_nodes} nodes, {len(edges)} edges) to {dir_path}")


# =============================================================================
# Synthetic planted-informative-neighbor graphs
# =============================================================================


def _mark_informative(community: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator):
    informative = np.zeros(len(community), dtype=bool)
    for c in range(spec.num_communities):
        members = rng.permutation(np.flatnonzero(community == c))
        count = int(round(spec.informative_node_fraction * len(members)))
        count = min(max(count, 1), len(members) - 1)
        informative[members[:count]] = True
    return informative


def generate_synthetic(spec: SyntheticSpec) -> Graph:
    """
    Generate a planted-informative-neighbor graph.

    Each community has informative nodes, whose features sit near the
    community centroid, and uninformative nodes, whose features come from a
    single community-independent distribution. Centroids are weak
    (signal_scale), so one node says little about its label while several
    informative neighbors together say a lot. Every centroid is offset by
    +marker_scale along one shared unit axis and the uninformative centre by
    -marker_scale, which makes informativeness a linear function of the
    features. An edge is same-community with
    probability p_inf (any node joined to an informative node of its own
    community) and otherwise joins two uninformative nodes of different
    communities. Informative neighbors therefore always share the node's
    community, and the fraction of same-community edges is p_inf up to
    sampling noise. Labels are the communities (single-label).

    Args:
        spec: Generator parameters; the same seed yields a bit-identical graph

    Returns:
        Graph with a random train/val/test split
    """
    rng = np.random.default_rng(spec.seed)
    n, k, m = spec.num_nodes, spec.num_communities, spec.feature_dim

    community = rng.permutation(np.arange(n) % k)
    informative = _mark_informative(community, spec, rng)

    axis = rng.normal(0.0, 1.0, size=m)
    axis /= np.linalg.norm(axis)
    centroids = spec.signal_scale * rng.normal(0.0, 1.0, size=(k, m))
    centroids += spec.marker_scale * axis
    noise_center = -spec.marker_scale * axis
    centers = np.where(informative[:, None], centroids[community], noise_center[None, :])
    features = centers + spec.noise_std * rng.normal(0.0, 1.0, size=(n, m))
    features = features.astype(np.float32).astype(np.float64)

    num_edges = int(round(n * spec.mean_degree / 2))
    same = rng.random(num_edges) < spec.informative_fraction
    num_same = int(same.sum())
    num_cross = num_edges - num_same

    # Same-community edges: any node to an informative node of its community
    pool = [np.flatnonzero(informative & (community == c)) for c in range(k)]
    pool_sizes = np.array([len(p) for p in pool])
    pool_offsets = np.concatenate([[0], np.cumsum(pool_sizes)[:-1]])
    pool_flat = np.concatenate(pool)
    v_same = rng.integers(0, n, size=num_same)
    pick = (rng.random(num_same) * pool_sizes[community[v_same]]).astype(np.int64)
    u_same = pool_flat[pool_offsets[community[v_same]] + pick]

    # Cross-community edges between uninformative nodes
    uninformative = np.flatnonzero(~informative)
    v_cross = uninformative[rng.integers(0, len(uninformative), size=num_cross)]
    u_cross = uninformative[rng.integers(0, len(uninformative), size=num_cross)]
    clash = community[u_cross] == community[v_cross]
    while clash.any():
        u_cross[clash] = uninformative[rng.integers(0, len(uninformative), size=int(clash.sum()))]
        clash = community[u_cross] == community[v_cross]

    offsets, targets = build_csr(
        n, np.concatenate([v_same, v_cross]), np.concatenate([u_same, u_cross])
    )

    split = np.full(n, TEST, dtype=np.uint8)
    order = rng.permutation(n)
    num_train = int(round(spec.train_fraction * n))
    num_val = int(round(spec.val_fraction * n))
    split[order[:num_train]] = TRAIN
    split[order[num_train : num_train + num_val]] = VAL

    labels = np.zeros((n, k), dtype=np.float64)
    labels[np.arange(n), community] = 1.0

    logger.info(
        f"Generated synthetic graph: {n} nodes, {len(targets) // 2} edges, "
        f"{k} communities, p_inf={spec.informative_fraction}"
    )
    return Graph(
        num_nodes=n,
        csr_offsets=offsets,
        csr_targets=targets,
        features=features,
        labels=labels,
        split=split,
        label_mode="single",
    )
