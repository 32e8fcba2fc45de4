"""
Experiment, history and result models for sagerl.

This module contains Pydantic models for the experiment config file, the
training and regressor-fit histories, and the rows of a benchmark report.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from sagerl.models.dataset import SyntheticSpec
from sagerl.models.training import RewardVariant, RLConfig, SageConfig

REPORT_SCHEMA_VERSION = 1


class ExperimentConfig(BaseModel):
    """One experiment: data source, model and RL settings, seeds, output."""

    dataset: Optional[str] = Field(
        default=None, description="Dataset directory; a synthetic graph is used when unset"
    )
    synthetic: SyntheticSpec = Field(
        default_factory=SyntheticSpec, description="Generator parameters when dataset is unset"
    )
    sage: SageConfig = Field(default_factory=SageConfig, description="GraphSAGE settings")
    rl: RLConfig = Field(default_factory=RLConfig, description="Value-learning settings")
    sampler: Literal["uniform", "rl"] = Field(
        default="rl", description="Sampler used by train/eval"
    )
    variants: Optional[List[RewardVariant]] = Field(
        default=None, description="RL reward variants compared by bench (default: rl.reward_mode)"
    )
    seeds: List[int] = Field(
        default=[0, 1, 2, 3, 4], description="Seeds; metrics average over them"
    )
    output: Optional[str] = Field(default=None, description="Output directory")

    @model_validator(mode="after")
    def check_seeds(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {self.seeds}")
        return self

    def bench_variants(self) -> List[RewardVariant]:
        return list(self.variants) if self.variants else [self.rl.reward_mode]

    def dataset_name(self) -> str:
        if self.dataset is None:
            return "synthetic"
        return self.dataset.rstrip("/").split("/")[-1]


class EpochRecord(BaseModel):
    """Per-epoch training statistics."""

    epoch: int = Field(..., ge=1)
    train_loss: float = Field(..., description="Mean per-root loss over the epoch")
    val_f1: Optional[float] = Field(default=None, description="Validation micro-F1")
    steps: int = Field(..., ge=0, description="Optimizer steps taken in the epoch")
    seconds: float = Field(..., ge=0)


class TrainHistory(BaseModel):
    """Training history of one GraphSAGE run."""

    sampler: Literal["uniform", "value"]
    epochs: List[EpochRecord] = Field(default_factory=list)

    @property
    def total_steps(self) -> int:
        return sum(record.steps for record in self.epochs)


class FitHistory(BaseModel):
    """Regressor fit history."""

    num_pairs: int = Field(..., ge=0, description="Visited (v, u) pairs used as targets")
    initial_mse: float = Field(..., ge=0)
    epoch_mse: List[float] = Field(default_factory=list, description="MSE after each epoch")

    @property
    def final_mse(self) -> float:
        return self.epoch_mse[-1] if self.epoch_mse else self.initial_mse


class ValueSummary(BaseModel):
    """Distribution of value estimates over visited pairs."""

    count: int = Field(..., ge=0)
    mean: float
    std: float
    min: float
    max: float
    quantiles: Dict[str, float] = Field(default_factory=dict, description="q10/q50/q90")


class ResultRow(BaseModel):
    """One method's row in a benchmark report."""

    method: str = Field(..., description="uniform, rl_all_hop, rl_first_hop or rl_last_hop")
    dataset: str
    seeds: List[int]
    f1_per_seed: List[float]
    f1_mean: float = Field(..., ge=0, le=1)
    test_time_s: List[float] = Field(
        default_factory=list, description="Test-set prediction wall time per seed"
    )
    param_mb: float = Field(..., ge=0, description="Parameter size at 4 bytes per parameter")
    epochs: int = Field(..., ge=1)
    value_summaries: List[ValueSummary] = Field(
        default_factory=list, description="Value-table summary per seed (RL methods)"
    )
    config: Dict[str, Any] = Field(default_factory=dict, description="Config echo")

    @model_validator(mode="after")
    def check_row(self) -> "ResultRow":
        if len(self.f1_per_seed) != len(self.seeds):
            raise ValueError("f1_per_seed must have one entry per seed")
        if any(not 0.0 <= f1 <= 1.0 for f1 in self.f1_per_seed):
            raise ValueError("F1 values must lie in [0, 1]")
        if any(t < 0 for t in self.test_time_s):
            raise ValueError("test times must be non-negative")
        return self

    @property
    def test_time_mean(self) -> float:
        return sum(self.test_time_s) / len(self.test_time_s) if self.test_time_s else 0.0


class Report(BaseModel):
    """Schema-versioned collection of result rows."""

    schema_version: int = Field(default=REPORT_SCHEMA_VERSION)
    rows: List[ResultRow] = Field(default_factory=list)
