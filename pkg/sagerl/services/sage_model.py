"""
K-layer GraphSAGE with mean_concat / mean_add aggregators.

Layer l turns every hop-j representation (j < depth - l + 1) into a new one:

    mean = mean of the sampled children of each node
    z    = concat(mean @ W_neigh, h_self @ W_self)   (mean_concat)
         = mean @ W_neigh + h_self @ W_self           (mean_add)
    h    = l2_normalize(relu(z))

Classifier heads map the depth-d root representation to C logits. Head K is
the main classifier; heads 1..K-1 exist when aux heads are enabled and only
ever receive head-local gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from sagerl.models.training import SageConfig
from sagerl.services.graph_store import Graph
from sagerl.services.ndmath import (
    Matrix,
    Param,
    concat_cols,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    relu,
    relu_backward,
    row_mean,
    row_mean_backward,
    sigmoid_xent,
    softmax,
    softmax_xent,
    split_cols,
)
from sagerl.services.samplers import SampleTree

logger = logging.getLogger(__name__)

BYTES_PER_PARAMETER = 4
MEGABYTE = 2**20


class FanoutMismatchError(ValueError):
    """Raised when a sample tree was built with fanouts other than the model's."""

    pass


class StaleCacheError(ValueError):
    """Raised when backward is handed logits or labels that do not match its forward cache."""

    pass


@dataclass(eq=False)
class LayerParams:
    w_neigh: Param
    w_self: Param


@dataclass(eq=False)
class HeadParams:
    weight: Param
    bias: Param


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Matrix:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


@dataclass(eq=False)
class SageParams:
    """
    All trainable matrices of one model plus the dimensions they were built for.

    Weight matrices are stored input-width x output-width so that a layer is
    ``rows @ W``.
    """

    config: SageConfig
    feature_dim: int
    num_labels: int
    label_mode: str
    layers: List[LayerParams]
    heads: Dict[int, HeadParams]

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0].w_self.value.dtype

    @property
    def out_width(self) -> int:
        """Width of every layer output (2M' for mean_concat, M' for mean_add)."""
        return layer_output_width(self.config)

    @classmethod
    def initialize(
        cls,
        config: SageConfig,
        feature_dim: int,
        num_labels: int,
        label_mode: str,
        rng: np.random.Generator,
        dtype: Optional[str] = None,
    ) -> "SageParams":
        """
        Glorot-uniform initialization; head biases start at zero.

        Aux heads draw from their own spawned stream, so the layers and the
        main head are identical with and without aux heads for a given rng.
        """
        dtype = np.dtype(dtype or config.precision)
        main_rng, aux_rng = rng.spawn(2)
        hidden = config.hidden_dim
        width = layer_output_width(config)

        layers = []
        in_width = feature_dim
        for _ in range(config.num_layers):
            layers.append(
                LayerParams(
                    w_neigh=Param(_glorot(main_rng, in_width, hidden, dtype)),
                    w_self=Param(_glorot(main_rng, in_width, hidden, dtype)),
                )
            )
            in_width = width

        def head(r: np.random.Generator) -> HeadParams:
            return HeadParams(
                weight=Param(_glorot(r, width, num_labels, dtype)),
                bias=Param(np.zeros((1, num_labels), dtype=dtype)),
            )

        heads = {config.num_layers: head(main_rng)}
        if config.aux_heads:
            for depth in range(1, config.num_layers):
                heads[depth] = head(aux_rng)

        return cls(
            config=config,
            feature_dim=feature_dim,
            num_labels=num_labels,
            label_mode=label_mode,
            layers=layers,
            heads=dict(sorted(heads.items())),
        )

    def named_params(self) -> Iterator[Tuple[str, Param]]:
        """Parameters in declaration order: layers first, then heads by depth."""
        for k, layer in enumerate(self.layers, 1):
            yield f"layer{k}.w_neigh", layer.w_neigh
            yield f"layer{k}.w_self", layer.w_self
        for depth in sorted(self.heads):
            yield f"head{depth}.weight", self.heads[depth].weight
            yield f"head{depth}.bias", self.heads[depth].bias

    def num_parameters(self) -> int:
        return sum(param.size for _, param in self.named_params())

    def zero_grad(self) -> None:
        for _, param in self.named_params():
            param.zero_grad()


def layer_output_width(config: SageConfig) -> int:
    return 2 * config.hidden_dim if config.aggregator == "mean_concat" else config.hidden_dim


def param_bytes(params: SageParams) -> int:
    """Parameter size at 4 bytes per parameter, counting every layer and head."""
    return BYTES_PER_PARAMETER * params.num_parameters()


def param_megabytes(params: SageParams) -> float:
    return param_bytes(params) / MEGABYTE


@dataclass
class _HopCache:
    self_in: Matrix
    mean: Matrix
    z: Matrix
    out: Matrix
    norms: Matrix


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by loss_and_backward."""

    depth: int
    tree: SampleTree
    root_h: Matrix
    logits_shape: Tuple[int, int]
    layers: List[List[_HopCache]] = field(default_factory=list)


def forward(
    graph: Graph, tree: SampleTree, params: SageParams, depth: Optional[int] = None
) -> Tuple[Matrix, ForwardCache]:
    """
    Root logits at the given depth.

    Uses layers 1..depth and head ``depth`` over the tree truncated at
    ``depth``; hops deeper than that are never read.

    Args:
        graph: Graph supplying the input features
        tree: Sample tree built with the model's fanouts (or a prefix reaching depth)
        params: Model parameters
        depth: 1..K, defaults to K

    Returns:
        (logits for the roots, cache for loss_and_backward)

    Raises:
        FanoutMismatchError: If the tree's fanouts disagree with the config
    """
    config = params.config
    depth = config.num_layers if depth is None else depth
    if not 1 <= depth <= config.num_layers:
        raise ValueError(f"depth must lie in [1, {config.num_layers}], got {depth}")
    if depth not in params.heads:
        raise ValueError(f"no classifier head at depth {depth}; enable aux_heads")
    if list(tree.fanouts[:depth]) != list(config.fanouts[:depth]):
        raise FanoutMismatchError(
            f"tree fanouts {tree.fanouts} do not match model fanouts {config.fanouts}"
        )

    tree = tree.truncate(depth)
    dtype = params.dtype
    h = [graph.features[ids].astype(dtype) for ids in tree.layers]
    concat = config.aggregator == "mean_concat"

    layer_caches: List[List[_HopCache]] = []
    for l in range(1, depth + 1):
        layer = params.layers[l - 1]
        hop_caches = []
        next_h = []
        for j in range(depth - l + 1):
            mean = row_mean(h[j + 1], tree.parent_map(j + 1), len(h[j]))
            neigh = mean @ layer.w_neigh.value
            own = h[j] @ layer.w_self.value
            z = concat_cols(neigh, own) if concat else neigh + own
            out, norms = l2_normalize_rows(relu(z))
            hop_caches.append(_HopCache(self_in=h[j], mean=mean, z=z, out=out, norms=norms))
            next_h.append(out)
        layer_caches.append(hop_caches)
        h = next_h

    head = params.heads[depth]
    logits = h[0] @ head.weight.value + head.bias.value
    cache = ForwardCache(
        depth=depth, tree=tree, root_h=h[0], logits_shape=logits.shape, layers=layer_caches
    )
    return logits, cache


def loss_and_backward(
    logits: Matrix, labels: Matrix, params: SageParams, cache: ForwardCache
) -> float:
    """
    Batch loss (summed over rows) with gradients accumulated into the params.

    A depth-K cache backpropagates through every layer. A shallower cache
    belongs to an aux head and only that head receives gradients.

    Args:
        logits: Output of forward
        labels: Label rows of the roots (one-hot or multi-hot)
        params: Parameters the forward pass used
        cache: Cache returned by the same forward pass

    Returns:
        Summed cross-entropy over the batch

    Raises:
        StaleCacheError: If logits or labels do not match the cache
    """
    if logits.shape != cache.logits_shape or labels.shape != logits.shape:
        raise StaleCacheError(
            f"logits {logits.shape} / labels {labels.shape} "
            f"do not match cached {cache.logits_shape}"
        )

    labels = labels.astype(logits.dtype, copy=False)
    if params.label_mode == "multi":
        loss, dlogits = sigmoid_xent(logits, labels)
    else:
        loss, dlogits = softmax_xent(logits, labels)

    head = params.heads[cache.depth]
    head.weight.grad += cache.root_h.T @ dlogits
    head.bias.grad += dlogits.sum(axis=0, keepdims=True)
    if cache.depth != params.config.num_layers:
        return loss

    hidden = params.config.hidden_dim
    concat = params.config.aggregator == "mean_concat"
    grads = [dlogits @ head.weight.value.T]
    for l in range(cache.depth, 0, -1):
        layer = params.layers[l - 1]
        hop_caches = cache.layers[l - 1]
        upstream = None
        if l > 1:
            upstream = [np.zeros_like(c.self_in) for c in hop_caches]
            upstream.append(np.zeros_like(cache.layers[l - 2][len(hop_caches)].out))

        for j, hop in enumerate(hop_caches):
            dz = relu_backward(l2_normalize_rows_backward(grads[j], hop.out, hop.norms), hop.z)
            dneigh, dself = split_cols(dz, hidden) if concat else (dz, dz)
            layer.w_neigh.grad += hop.mean.T @ dneigh
            layer.w_self.grad += hop.self_in.T @ dself
            if upstream is not None:
                upstream[j] += dself @ layer.w_self.value.T
                dmean = dneigh @ layer.w_neigh.value.T
                upstream[j + 1] += row_mean_backward(dmean, cache.tree.parent_map(j + 1))
        grads = upstream

    return loss


def predict_proba(logits: Matrix, label_mode: str) -> Matrix:
    """Per-row class distribution (softmax) or per-label probabilities (sigmoid)."""
    return expit(logits) if label_mode == "multi" else softmax(logits)
