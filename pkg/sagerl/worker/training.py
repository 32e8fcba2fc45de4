"""
GraphSAGE training and prediction loops.

train() runs mini-batch Adam over shuffled train nodes with a chosen sampler
and can stream per-root episodes (rewards for the value table) to a sink.
predict() samples fresh trees and turns root logits into label decisions.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from sagerl.core.timing import timer
from sagerl.models.experiment import EpochRecord, TrainHistory
from sagerl.models.training import RewardMode, SageConfig
from sagerl.services.graph_store import Graph
from sagerl.services.metrics import micro_f1
from sagerl.services.ndmath import adam_step
from sagerl.services.sage_model import SageParams, forward, loss_and_backward, predict_proba
from sagerl.services.samplers import Sampler, build_tree
from sagerl.services.value import EpisodeRecord, build_episodes, per_step_rewards

logger = logging.getLogger(__name__)

EpisodeSink = Callable[[List[EpisodeRecord]], None]


class EmptySplitError(Exception):
    """Raised when a split needed for training has no nodes."""

    pass


def train(
    graph: Graph,
    config: SageConfig,
    sampler: Sampler,
    rng: np.random.Generator,
    episode_sink: Optional[EpisodeSink] = None,
    reward_mode: RewardMode = "all_hop",
    eval_graph: Optional[Graph] = None,
    dtype: Optional[str] = None,
) -> Tuple[SageParams, TrainHistory]:
    """
    Train a fresh GraphSAGE model.

    Each batch: build a tree with the sampler, forward at depth K, backward,
    then (with aux heads) forward/backward every aux head, emit episodes,
    and take one Adam step on every parameter. Rewards come from the
    predictions made before that step. A partial final batch is kept.

    Args:
        graph: Training graph (usually restrict_to_train of the full graph)
        config: Model and loop settings
        sampler: UniformSampler or ValueSampler
        rng: Generator; init, batching and validation use separate spawned streams
        episode_sink: Receives the list of EpisodeRecords of every batch
        reward_mode: all_hop needs aux heads when K > 1
        eval_graph: Graph used for validation F1 (defaults to graph)
        dtype: Working precision override (defaults to config.precision)

    Returns:
        (trained params, per-epoch history)

    Raises:
        EmptySplitError: If the graph has no train nodes
        ValueError: If all_hop episodes are requested without aux heads
    """
    train_nodes = graph.nodes_in("train")
    if len(train_nodes) == 0:
        raise EmptySplitError("graph has no train nodes")
    depth = config.num_layers
    if episode_sink is not None and reward_mode == "all_hop" and depth > 1 and not config.aux_heads:
        raise ValueError("all_hop rewards need aux_heads enabled")

    init_rng, batch_rng, eval_rng = rng.spawn(3)
    params = SageParams.initialize(
        config, graph.feature_dim, graph.num_labels, graph.label_mode, init_rng, dtype
    )
    adam = config.adam()
    eval_graph = eval_graph or graph
    val_nodes = eval_graph.nodes_in("val")
    history = TrainHistory(sampler=sampler.name)

    logger.info(
        f"Training {depth}-layer {config.aggregator} model with {sampler.name} sampling "
        f"on {len(train_nodes)} train nodes for {config.epochs} epochs"
    )

    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        steps = 0
        with timer(f"Epoch {epoch}", logger) as elapsed:
            order = batch_rng.permutation(train_nodes)
            for start in range(0, len(order), config.batch_size):
                batch = order[start : start + config.batch_size]
                tree = build_tree(graph, batch, sampler, config.fanouts, batch_rng)
                labels = graph.labels[batch]

                params.zero_grad()
                logits, cache = forward(graph, tree, params)
                epoch_loss += loss_and_backward(logits, labels, params, cache)

                rewards = np.zeros((len(batch), depth))
                rewards[:, depth - 1] = per_step_rewards(
                    labels, predict_proba(logits, graph.label_mode), graph.label_mode
                )
                if config.aux_heads:
                    for d in range(1, depth):
                        aux_logits, aux_cache = forward(graph, tree, params, d)
                        loss_and_backward(aux_logits, labels, params, aux_cache)
                        rewards[:, d - 1] = per_step_rewards(
                            labels, predict_proba(aux_logits, graph.label_mode), graph.label_mode
                        )

                if episode_sink is not None:
                    episode_sink(build_episodes(tree, rewards, reward_mode))

                for _, param in params.named_params():
                    adam_step(param, adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon)
                steps += 1

            val_f1 = None
            if len(val_nodes):
                val_f1 = evaluate(eval_graph, params, val_nodes, sampler, eval_rng)

        record = EpochRecord(
            epoch=epoch,
            train_loss=epoch_loss / len(train_nodes),
            val_f1=val_f1,
            steps=steps,
            seconds=elapsed.seconds,
        )
        history.epochs.append(record)
        val_text = f"{val_f1:.4f}" if val_f1 is not None else "n/a"
        logger.info(
            f"Epoch {epoch}/{config.epochs}: loss={record.train_loss:.4f}, val_f1={val_text}"
        )

    return params, history


def predict_logits(
    graph: Graph,
    params: SageParams,
    nodes: np.ndarray,
    sampler: Sampler,
    rng: np.random.Generator,
    batch_size: Optional[int] = None,
) -> np.ndarray:
    """Depth-K root logits for the given nodes on freshly sampled trees."""
    nodes = np.asarray(nodes, dtype=np.int64)
    batch_size = batch_size or params.config.eval_batch_size
    if len(nodes) == 0:
        return np.zeros((0, params.num_labels), dtype=params.dtype)

    chunks = []
    for start in range(0, len(nodes), batch_size):
        batch = nodes[start : start + batch_size]
        tree = build_tree(graph, batch, sampler, params.config.fanouts, rng)
        logits, _ = forward(graph, tree, params)
        chunks.append(logits)
    return np.concatenate(chunks)


def decisions_from_logits(logits: np.ndarray, label_mode: str) -> np.ndarray:
    """Single-label: one-hot argmax per row. Multi-label: logit > 0 (sigmoid > 0.5)."""
    if label_mode == "multi":
        return (logits > 0).astype(np.float64)
    decisions = np.zeros(logits.shape, dtype=np.float64)
    decisions[np.arange(len(logits)), np.argmax(logits, axis=1)] = 1.0
    return decisions


def predict(
    graph: Graph,
    params: SageParams,
    nodes: np.ndarray,
    sampler: Sampler,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Label decisions for the given nodes.

    Returns:
        len(nodes) x C 0/1 indicator matrix
    """
    logits = predict_logits(graph, params, nodes, sampler, rng)
    return decisions_from_logits(logits, params.label_mode)


def evaluate(
    graph: Graph,
    params: SageParams,
    nodes: np.ndarray,
    sampler: Sampler,
    rng: np.random.Generator,
) -> float:
    """Micro-F1 of predict() against the graph's labels."""
    decisions = predict(graph, params, nodes, sampler, rng)
    return micro_f1(decisions, graph.labels[nodes], graph.label_mode)
