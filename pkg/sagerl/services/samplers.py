"""
Fixed fan-out neighborhood samplers.

Two samplers share one interface:

- UniformSampler: N_k neighbors per frontier node, uniformly with replacement.
- ValueSampler: neighbors are split into N_k random groups and the member
  with the highest predicted return is taken from each group.

Both emit children grouped by parent, so child block i of hop k belongs to
frontier node i of hop k-1. Degree-0 nodes sample themselves.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Protocol, Sequence

import numpy as np

from sagerl.services.graph_store import Graph, NodeIndexError

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SamplerConfigurationError(Exception):
    """Raised when a sampler is built from an unusable scorer."""

    pass


class NeighborScorer(Protocol):
    """Anything that can score (v, u) candidate pairs, such as a fitted ValueRegressor."""

    fitted: bool

    def bind(self, features: np.ndarray) -> ScoreFn:
        """Return a vectorized score(v_ids, u_ids) over the given feature matrix."""
        ...


@dataclass(frozen=True)
class SampleTree:
    """
    Per-hop sampled frontiers for a batch of roots.

    Attributes:
        layers: layers[0] are the roots; layers[k] has len(layers[k-1]) * fanouts[k-1] ids
        fanouts: Sample sizes N^1..N^depth
    """

    layers: List[np.ndarray]
    fanouts: List[int]

    @property
    def roots(self) -> np.ndarray:
        return self.layers[0]

    @property
    def depth(self) -> int:
        return len(self.fanouts)

    def parent_map(self, k: int) -> np.ndarray:
        """Index into layers[k-1] of the parent of every node in layers[k]."""
        return np.repeat(np.arange(len(self.layers[k - 1])), self.fanouts[k - 1])

    def truncate(self, depth: int) -> "SampleTree":
        return SampleTree(layers=self.layers[: depth + 1], fanouts=self.fanouts[:depth])

    def first_hop(self, i: int) -> np.ndarray:
        """First-hop sample of the i-th root."""
        n1 = self.fanouts[0]
        return self.layers[1][i * n1 : (i + 1) * n1]


def _self_copies(frontier: np.ndarray, fanout: int) -> np.ndarray:
    return np.repeat(frontier, fanout)


def uniform_expand(
    graph: Graph, frontier: np.ndarray, fanout: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Sample ``fanout`` neighbors per frontier node, uniformly with replacement.

    Args:
        graph: Graph to sample from
        frontier: Node ids of the current hop
        fanout: N_k
        rng: Random generator

    Returns:
        len(frontier) * fanout child ids grouped by parent
    """
    frontier = np.asarray(frontier, dtype=np.int64)
    if len(graph.csr_targets) == 0:
        return _self_copies(frontier, fanout)

    degrees = graph.degrees()[frontier]
    offsets = graph.csr_offsets[frontier]
    draws = np.floor(rng.random((len(frontier), fanout)) * degrees[:, None]).astype(np.int64)
    index = np.minimum(offsets[:, None] + draws, len(graph.csr_targets) - 1)
    children = np.where(degrees[:, None] > 0, graph.csr_targets[index], frontier[:, None])
    return children.reshape(-1)


def partition_neighbors(
    neighbor_ids: np.ndarray, num_groups: int, rng: np.random.Generator
) -> List[np.ndarray]:
    """
    Randomly partition neighbor ids into ``num_groups`` balanced groups.

    The ids are shuffled by sorting one uniform key per id, then cut into
    contiguous chunks whose sizes differ by at most one (larger chunks first).

    Example:
        >>> [len(g) for g in partition_neighbors(np.arange(7), 3, rng)]
        [3, 2, 2]
    """
    keys = rng.random(len(neighbor_ids))
    order = np.argsort(keys, kind="stable")
    return np.array_split(np.asarray(neighbor_ids)[order], num_groups)


def _fill_small(
    graph: Graph, parents: np.ndarray, fanout: int, rng: np.random.Generator
) -> np.ndarray:
    # Every neighbor once, remaining slots uniform with replacement
    degrees = graph.degrees()[parents]
    offsets = graph.csr_offsets[parents]
    slot = np.arange(fanout)[None, :]
    draws = np.floor(rng.random((len(parents), fanout)) * degrees[:, None]).astype(np.int64)
    index = offsets[:, None] + np.where(slot < degrees[:, None], slot, draws)
    return graph.csr_targets[index]


def _partitioned_argmax(
    graph: Graph, parents: np.ndarray, fanout: int, score: ScoreFn, rng: np.random.Generator
) -> np.ndarray:
    degrees = graph.degrees()[parents]
    owner = np.repeat(np.arange(len(parents)), degrees)
    starts = np.concatenate([[0], np.cumsum(degrees)[:-1]])
    position = np.arange(len(owner)) - starts[owner]
    slots = graph.csr_offsets[parents][owner] + position
    candidates = graph.csr_targets[slots]

    # Random permutation within each parent's neighbor list
    keys = rng.random(len(candidates))
    order = np.lexsort((keys, owner))
    candidates = candidates[order]

    # Balanced contiguous chunks, larger chunks first
    d = degrees[owner]
    q, r = np.divmod(d, fanout)
    big = r * (q + 1)
    group = np.where(position < big, position // (q + 1), r + (position - big) // np.maximum(q, 1))
    group_id = owner * fanout + group

    scores = np.asarray(score(parents[owner], candidates), dtype=np.float64)
    ranked = np.lexsort((candidates, -scores, group_id))
    first = np.flatnonzero(np.r_[True, np.diff(group_id[ranked]) != 0])
    return candidates[ranked[first]]


def value_expand(
    graph: Graph,
    scorer: NeighborScorer,
    frontier: np.ndarray,
    fanout: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample ``fanout`` neighbors per frontier node by partitioned argmax.

    Per node v: degree 0 gives fanout copies of v; degree <= fanout gives every
    neighbor once plus uniform fill; otherwise the neighbors are partitioned
    into fanout random groups and each group contributes its highest-scoring
    member, ties going to the lowest node id.

    Args:
        graph: Graph to sample from
        scorer: Fitted scorer; its bound score function sees graph.features
        frontier: Node ids of the current hop
        fanout: N_k
        rng: Random generator

    Returns:
        len(frontier) * fanout child ids grouped by parent
    """
    return ValueSampler(scorer).expand(graph, frontier, fanout, rng)


class UniformSampler:
    """Uniform with-replacement sampling of a fixed number of neighbors."""

    name = "uniform"

    def expand(
        self, graph: Graph, frontier: np.ndarray, fanout: int, rng: np.random.Generator
    ) -> np.ndarray:
        return uniform_expand(graph, frontier, fanout, rng)


class ValueSampler:
    """
    Value-driven sampler over a fitted neighbor scorer.

    One scorer serves every hop. The bound score function is cached per
    feature matrix, so repeated expansions over the same graph reuse the
    precomputed projections.

    Raises:
        SamplerConfigurationError: If the scorer is not fitted
    """

    name = "value"

    def __init__(self, scorer: NeighborScorer):
        if not getattr(scorer, "fitted", False):
            raise SamplerConfigurationError(
                "value sampler needs a fitted regressor; run fit_regressor first"
            )
        self.scorer = scorer
        self._bound_features: np.ndarray | None = None
        self._score: ScoreFn | None = None

    def _score_fn(self, features: np.ndarray) -> ScoreFn:
        if self._score is None or self._bound_features is not features:
            self._score = self.scorer.bind(features)
            self._bound_features = features
        return self._score

    def expand(
        self, graph: Graph, frontier: np.ndarray, fanout: int, rng: np.random.Generator
    ) -> np.ndarray:
        frontier = np.asarray(frontier, dtype=np.int64)
        degrees = graph.degrees()[frontier]
        children = np.empty((len(frontier), fanout), dtype=np.int64)

        isolated = degrees == 0
        small = (degrees >= 1) & (degrees <= fanout)
        large = degrees > fanout

        children[isolated] = frontier[isolated, None]
        if small.any():
            children[small] = _fill_small(graph, frontier[small], fanout, rng)
        if large.any():
            score = self._score_fn(graph.features)
            picked = _partitioned_argmax(graph, frontier[large], fanout, score, rng)
            children[large] = picked.reshape(-1, fanout)
        return children.reshape(-1)


Sampler = UniformSampler | ValueSampler


def build_tree(
    graph: Graph,
    roots: Sequence[int] | np.ndarray,
    sampler: Sampler,
    fanouts: Sequence[int],
    rng: np.random.Generator,
) -> SampleTree:
    """
    Sample a fixed fan-out tree hop by hop.

    Args:
        graph: Graph to sample from
        roots: Root node ids (nonempty)
        sampler: UniformSampler or ValueSampler
        fanouts: N^1..N^K
        rng: Random generator

    Returns:
        SampleTree with |layers[k]| == len(roots) * prod(fanouts[:k])
    """
    roots = np.asarray(roots, dtype=np.int64)
    if len(roots) == 0:
        raise ValueError("build_tree needs at least one root")
    bad = (roots < 0) | (roots >= graph.num_nodes)
    if bad.any():
        raise NodeIndexError(
            f"node id {int(roots[bad][0])} out of range [0, {graph.num_nodes})"
        )

    layers = [roots]
    for fanout in fanouts:
        layers.append(sampler.expand(graph, layers[-1], int(fanout), rng))
    return SampleTree(layers=layers, fanouts=[int(n) for n in fanouts])
