"""
Multi-seed benchmark harness.

Every seed runs one shared uniform phase and the value phases of each
requested reward variant. Seeds run on a thread pool capped by
SAGERL_NUM_WORKERS and are reassembled in seed order, so the rows do not
depend on completion order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from sagerl.core.config import get_settings
from sagerl.models.experiment import ExperimentConfig, ResultRow
from sagerl.models.training import RLConfig
from sagerl.services.graph_store import Graph, generate_synthetic, load_dataset
from sagerl.services.sage_model import BYTES_PER_PARAMETER, MEGABYTE, SageParams
from sagerl.worker.pipeline import PhaseResult, ValuePhase, run_pipeline_variants

logger = logging.getLogger(__name__)


@dataclass
class SeedRun:
    seed: int
    uniform: PhaseResult
    variants: Dict[str, ValuePhase]


def load_graph(config: ExperimentConfig) -> Graph:
    """Dataset directory when configured, otherwise the synthetic generator."""
    if config.dataset is not None:
        graph, _ = load_dataset(config.dataset)
        return graph
    return generate_synthetic(config.synthetic)


def variant_configs(config: ExperimentConfig) -> Dict[str, RLConfig]:
    """RLConfig per requested variant, keeping the config's regressor settings."""
    base = config.rl.model_dump(exclude={"reward_mode", "gamma"})
    configs = {}
    for variant in config.bench_variants():
        if variant == config.rl.reward_mode:
            configs[variant] = config.rl
        else:
            configs[variant] = RLConfig.for_variant(variant, **base)
    return configs


def reported_megabytes(params: SageParams, aux_heads: bool) -> float:
    """
    Par (MB) of a trained model at 4 bytes per parameter.

    Aux heads switched on only for reward recording are left out, so the
    uniform row reports the plain model.
    """
    count = params.num_parameters()
    if not aux_heads:
        count -= sum(
            head.weight.size + head.bias.size
            for depth, head in params.heads.items()
            if depth != params.config.num_layers
        )
    return count * BYTES_PER_PARAMETER / MEGABYTE


def run_seed(graph: Graph, config: ExperimentConfig, seed: int) -> SeedRun:
    logger.info(f"Seed {seed}: starting")
    uniform, variants = run_pipeline_variants(
        graph, config.sage, variant_configs(config), np.random.default_rng(seed)
    )
    logger.info(
        f"Seed {seed}: uniform F1 {uniform.test_f1:.4f}, "
        + ", ".join(f"rl_{name} F1 {v.result.test_f1:.4f}" for name, v in variants.items())
    )
    return SeedRun(seed=seed, uniform=uniform, variants=variants)


def _row(
    method: str,
    config: ExperimentConfig,
    seeds: List[int],
    phases: List[PhaseResult],
    config_echo: dict,
    value_phases: Optional[List[ValuePhase]] = None,
) -> ResultRow:
    f1s = [phase.test_f1 for phase in phases]
    return ResultRow(
        method=method,
        dataset=config.dataset_name(),
        seeds=seeds,
        f1_per_seed=f1s,
        f1_mean=float(np.mean(f1s)),
        test_time_s=[phase.test_seconds for phase in phases],
        param_mb=reported_megabytes(phases[0].params, config.sage.aux_heads),
        epochs=config.sage.epochs,
        value_summaries=[v.value_summary for v in value_phases or []],
        config=config_echo,
    )


def run_bench(config: ExperimentConfig, graph: Optional[Graph] = None) -> List[ResultRow]:
    """
    Run every seed and assemble one row per method.

    Args:
        config: Experiment configuration
        graph: Preloaded graph (loaded from config when omitted)

    Returns:
        Rows "uniform" followed by "rl_<variant>" in variant order
    """
    graph = graph if graph is not None else load_graph(config)
    seeds = list(config.seeds)
    max_workers = min(get_settings().num_workers, len(seeds))
    logger.info(f"Running bench on {config.dataset_name()}: seeds {seeds}, {max_workers} workers")

    runs: Dict[int, SeedRun] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(run_seed, graph, config, seed): seed for seed in seeds}
        for future in as_completed(futures):
            seed = futures[future]
            runs[seed] = future.result()
            logger.info(f"Seed {seed} finished ({len(runs)}/{len(seeds)})")

    ordered = [runs[seed] for seed in seeds]
    if config.dataset:
        source = {"dataset": config.dataset}
    else:
        source = {"synthetic": config.synthetic.model_dump()}
    rows = [
        _row(
            "uniform",
            config,
            seeds,
            [run.uniform for run in ordered],
            {**source, "sage": config.sage.model_dump(), "sampler": "uniform"},
        )
    ]
    for name, rl_config in variant_configs(config).items():
        value_phases = [run.variants[name] for run in ordered]
        rows.append(
            _row(
                f"rl_{name}",
                config,
                seeds,
                [v.result for v in value_phases],
                {**source, "sage": config.sage.model_dump(), "rl": rl_config.model_dump()},
                value_phases,
            )
        )
    return rows
