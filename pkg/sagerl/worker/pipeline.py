"""
Three-phase RL sampling pipeline.

Phase A trains GraphSAGE with uniform sampling on the training graph and
records one episode per root and batch. Phase B turns the episodes into a
value table and fits the value regressor. Phase C trains a fresh model of
the same configuration with the value sampler. Both models are evaluated on
the test nodes of the full graph.

Several reward variants can share one phase A: aux heads never change the
main model, so the episodes recorded with all-hop rewards also yield every
last-hop table (prefix rewards zeroed) and every discount rate.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from sagerl.core.timing import timer
from sagerl.models.experiment import FitHistory, TrainHistory, ValueSummary
from sagerl.models.training import RLConfig, SageConfig
from sagerl.services.graph_store import Graph, restrict_to_train
from sagerl.services.metrics import micro_f1
from sagerl.services.sage_model import SageParams
from sagerl.services.samplers import Sampler, UniformSampler, ValueSampler
from sagerl.services.value import EpisodeRecord, ValueRegressor, ValueTable, fit_regressor
from sagerl.worker.training import predict, train

logger = logging.getLogger(__name__)


@dataclass
class PhaseResult:
    """A trained model with its history and test-set evaluation."""

    params: SageParams
    history: TrainHistory
    test_f1: float
    test_seconds: float


@dataclass
class UniformPhase:
    result: PhaseResult
    episodes: List[EpisodeRecord] = field(default_factory=list)


@dataclass
class ValuePhase:
    """Phases B and C of one reward variant."""

    rl_config: RLConfig
    table: ValueTable
    regressor: ValueRegressor
    fit_history: FitHistory
    value_summary: ValueSummary
    result: PhaseResult


@dataclass
class PipelineResult:
    """Everything one pipeline run produces."""

    uniform: PhaseResult
    value: ValuePhase

    @property
    def table(self) -> ValueTable:
        return self.value.table

    @property
    def regressor(self) -> ValueRegressor:
        return self.value.regressor

    @property
    def rl(self) -> PhaseResult:
        return self.value.result


def evaluate_test(
    graph: Graph, params: SageParams, sampler: Sampler, rng: np.random.Generator, label: str
) -> Tuple[float, float]:
    """
    Test-set micro-F1 and prediction wall time.

    The timed block covers tree sampling, forward passes and thresholding
    for all test nodes; dataset loading is outside it.

    Returns:
        (micro-F1, seconds)
    """
    test_nodes = graph.nodes_in("test")
    with timer(f"{label} test prediction", logger) as elapsed:
        decisions = predict(graph, params, test_nodes, sampler, rng)
    f1 = micro_f1(decisions, graph.labels[test_nodes], graph.label_mode)
    logger.info(f"{label} test micro-F1: {f1:.4f} on {len(test_nodes)} nodes")
    return f1, elapsed.seconds


def build_value_table(episodes: List[EpisodeRecord], rl_config: RLConfig) -> ValueTable:
    """Accumulate recorded episodes under one variant's reward mode and discount."""
    table = ValueTable()
    if rl_config.reward_mode == "last_hop":
        episodes = [episode.last_hop() for episode in episodes]
    table.merge_batch(episodes, rl_config.gamma)
    return table


def run_uniform_phase(
    graph: Graph,
    train_graph: Graph,
    sage_config: SageConfig,
    rng: np.random.Generator,
    record_all_hops: bool = True,
) -> UniformPhase:
    """
    Phase A: uniform-sampling training with episode recording.

    Args:
        graph: Full graph (validation and test)
        train_graph: Training view of graph
        sage_config: Model settings; aux heads are switched on when all-hop rewards are needed
        rng: Generator for this phase
        record_all_hops: Record rewards of every depth (needs aux heads when K > 1)

    Returns:
        UniformPhase with the trained model and all recorded episodes
    """
    train_rng, test_rng = rng.spawn(2)
    depth = sage_config.num_layers
    use_aux = sage_config.aux_heads or (record_all_hops and depth > 1)
    config = sage_config.model_copy(update={"aux_heads": use_aux})

    episodes: List[EpisodeRecord] = []
    with timer("Phase A (uniform training)", logger):
        params, history = train(
            train_graph,
            config,
            UniformSampler(),
            train_rng,
            episode_sink=episodes.extend,
            reward_mode="all_hop" if use_aux or depth == 1 else "last_hop",
            eval_graph=graph,
        )
    f1, seconds = evaluate_test(graph, params, UniformSampler(), test_rng, "Uniform")
    logger.info(f"Phase A recorded {len(episodes)} episodes")
    return UniformPhase(
        result=PhaseResult(params=params, history=history, test_f1=f1, test_seconds=seconds),
        episodes=episodes,
    )


def run_value_phases(
    graph: Graph,
    train_graph: Graph,
    sage_config: SageConfig,
    rl_config: RLConfig,
    episodes: List[EpisodeRecord],
    rng: np.random.Generator,
) -> ValuePhase:
    """
    Phases B and C for one reward variant.

    Args:
        graph: Full graph
        train_graph: Training view of graph
        sage_config: Model settings of the fresh phase C model
        rl_config: Reward mode, discount and regressor schedule
        episodes: Episodes recorded in phase A
        rng: Generator for these phases

    Returns:
        ValuePhase
    """
    init_rng, fit_rng, train_rng, test_rng = rng.spawn(4)

    table = build_value_table(episodes, rl_config)
    summary = table.summary()
    logger.info(
        f"Value table ({rl_config.reward_mode}, gamma={rl_config.gamma}): {summary.count} pairs, "
        f"mean {summary.mean:.4f}, min {summary.min:.4f}, max {summary.max:.4f}"
    )

    regressor = ValueRegressor.initialize(graph.feature_dim, init_rng)
    with timer("Phase B (regressor fit)", logger):
        fit_history = fit_regressor(regressor, table, graph.features, rl_config, fit_rng)

    sampler = ValueSampler(regressor)
    with timer("Phase C (value-sampler training)", logger):
        params, history = train(train_graph, sage_config, sampler, train_rng, eval_graph=graph)
    f1, seconds = evaluate_test(graph, params, sampler, test_rng, f"RL {rl_config.reward_mode}")

    return ValuePhase(
        rl_config=rl_config,
        table=table,
        regressor=regressor,
        fit_history=fit_history,
        value_summary=summary,
        result=PhaseResult(params=params, history=history, test_f1=f1, test_seconds=seconds),
    )


def run_pipeline_variants(
    graph: Graph,
    sage_config: SageConfig,
    rl_configs: Dict[str, RLConfig],
    rng: np.random.Generator,
) -> Tuple[PhaseResult, Dict[str, ValuePhase]]:
    """
    One phase A shared by several reward variants.

    Every variant's phases B and C start from a copy of the same generator,
    so a variant's result does not depend on which other variants run.

    Args:
        graph: Full graph
        sage_config: Model settings
        rl_configs: Variant name -> RLConfig
        rng: Generator for the whole run

    Returns:
        (uniform phase result, variant name -> ValuePhase)
    """
    uniform_rng, value_rng = rng.spawn(2)
    train_graph = restrict_to_train(graph)
    record_all = any(cfg.reward_mode == "all_hop" for cfg in rl_configs.values())

    phase_a = run_uniform_phase(graph, train_graph, sage_config, uniform_rng, record_all)
    variants = {
        name: run_value_phases(
            graph, train_graph, sage_config, rl_config, phase_a.episodes, copy.deepcopy(value_rng)
        )
        for name, rl_config in rl_configs.items()
    }
    return phase_a.result, variants


def run_pipeline(
    graph: Graph,
    sage_config: SageConfig,
    rl_config: RLConfig,
    rng: np.random.Generator,
    name: Optional[str] = None,
) -> PipelineResult:
    """
    Full three-phase run for one reward setting.

    Args:
        graph: Full graph with train/val/test split
        sage_config: Model settings shared by phases A and C
        rl_config: Value-learning settings
        rng: Generator; a fixed seed reproduces every metric
        name: Variant label used in logs

    Returns:
        PipelineResult with both models, the table, the regressor and test F1s
    """
    name = name or rl_config.reward_mode
    uniform, variants = run_pipeline_variants(graph, sage_config, {name: rl_config}, rng)
    return PipelineResult(uniform=uniform, value=variants[name])
