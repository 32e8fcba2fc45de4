"""
sagerl command-line interface.

Usage:
    # Compare uniform and RL sampling over the config's seeds
    sagerl bench --config experiments/synthetic.json --out runs/synthetic

    # Train one model (three-phase RL pipeline unless "sampler": "uniform")
    sagerl train --config experiments/pubmed.json --seed 0 --out runs/pubmed

    # Evaluate a checkpoint on the test split
    sagerl eval --config experiments/pubmed.json --checkpoint runs/pubmed/model.ckpt

    # Write a synthetic dataset directory
    sagerl synth --config experiments/synthetic.json --out data/synthetic

Exit status: 0 on success, 1 for configuration errors, 2 for runtime failures.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from sagerl.core.config import ConfigurationError, get_settings, load_experiment_config
from sagerl.core.log import configure_logging
from sagerl.models.experiment import ExperimentConfig
from sagerl.services.checkpoint import load_checkpoint, save_checkpoint
from sagerl.services.graph_store import generate_synthetic, restrict_to_train, write_dataset
from sagerl.services.report import format_table, report
from sagerl.services.samplers import UniformSampler, ValueSampler
from sagerl.worker.bench import load_graph, run_bench
from sagerl.worker.pipeline import evaluate_test, run_pipeline
from sagerl.worker.training import train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="sagerl",
        description="GraphSAGE with uniform and value-learned neighbor sampling",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument(
        "command",
        choices=["bench", "train", "eval", "synth"],
        help="bench: multi-seed comparison; train/eval: single model; synth: write dataset",
    )
    parser.add_argument("--config", required=True, help="Experiment config file (JSON)")
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed for train/eval (default: first config seed); bench runs only this seed",
    )
    parser.add_argument(
        "--out",
        default=None,
        help="Output directory (default: config 'output', then SAGERL_OUTPUT_DIR)",
    )
    parser.add_argument(
        "--checkpoint",
        default=None,
        help="Checkpoint path for train/eval (default: <out>/model.ckpt)",
    )
    parser.add_argument(
        "--log-level", default=None, help="Log level (default: SAGERL_LOG_LEVEL)"
    )
    return parser.parse_args(argv)


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(args.out or config.output or get_settings().output_dir)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    graph = generate_synthetic(config.synthetic)
    write_dataset(graph, out)
    print(f"Wrote synthetic dataset ({graph.num_nodes} nodes, {graph.num_edges} edges) to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    seed = args.seed if args.seed is not None else config.seeds[0]
    graph = load_graph(config)
    rng = np.random.default_rng(seed)

    if config.sampler == "uniform":
        params, history = train(
            restrict_to_train(graph), config.sage, UniformSampler(), rng, eval_graph=graph
        )
        save_checkpoint(checkpoint, params)
        _write_json(out / "history.json", {"seed": seed, "uniform": history.model_dump()})
        print(f"Trained uniform model; checkpoint at {checkpoint}")
        return EXIT_OK

    result = run_pipeline(graph, config.sage, config.rl, rng)
    save_checkpoint(checkpoint, result.rl.params, result.regressor)
    result.table.export(out / "value_table.txt")
    _write_json(
        out / "history.json",
        {
            "seed": seed,
            "uniform": result.uniform.history.model_dump(),
            "value": result.rl.history.model_dump(),
            "fit": result.value.fit_history.model_dump(),
            "value_summary": result.value.value_summary.model_dump(),
            "test_f1": {"uniform": result.uniform.test_f1, "rl": result.rl.test_f1},
        },
    )
    print(
        f"Uniform test F1 {result.uniform.test_f1:.4f}, RL test F1 {result.rl.test_f1:.4f}; "
        f"checkpoint at {checkpoint}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    seed = args.seed if args.seed is not None else config.seeds[0]
    params, regressor = load_checkpoint(checkpoint)
    graph = load_graph(config)

    sampler = ValueSampler(regressor) if regressor is not None else UniformSampler()
    f1, seconds = evaluate_test(graph, params, sampler, np.random.default_rng(seed), "Eval")
    _write_json(
        out / "eval.json",
        {"checkpoint": str(checkpoint), "sampler": sampler.name, "seed": seed, "test_f1": f1},
    )
    print(f"Test micro-F1 {f1:.4f} ({sampler.name} sampler, {seconds:.3f}s)")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    if args.seed is not None:
        config = config.model_copy(update={"seeds": [args.seed]})
    rows = run_bench(config)
    report(rows, out)
    print(format_table(rows), end="")
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "train": cmd_train, "eval": cmd_eval, "synth": cmd_synth}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one sagerl command.

    Returns:
        int: Exit code (0 = success, 1 = configuration error, 2 = runtime failure)
    """
    args = parse_args(argv)
    try:
        configure_logging(args.log_level)
        config = load_experiment_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigurationError(f"--seed must be >= 0, got {args.seed}")
        return COMMANDS[args.command](args, config)
    except (ConfigurationError, ValidationError) as e:
        print(f"error: {e}".splitlines()[0], file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}".splitlines()[0], file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
