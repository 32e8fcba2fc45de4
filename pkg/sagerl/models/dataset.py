"""
Dataset data models for sagerl.

This module defines Pydantic models that describe a dataset on disk
(meta.json) and the parameters of the synthetic graph generator.
"""

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator


class DatasetMeta(BaseModel):
    """Dataset dimensions, matching the keys of meta.json."""

    num_nodes: int = Field(..., ge=0, description="Number of nodes |V|")
    feature_dim: int = Field(..., ge=1, description="Input feature dimension M")
    num_labels: int = Field(..., ge=2, description="Label count C")
    label_mode: Literal["single", "multi"] = Field(
        ..., description="single: one-hot labels, softmax loss; multi: multi-hot, sigmoid loss"
    )
    num_edges: Optional[int] = Field(
        default=None, ge=0, description="Undirected edge count after cleaning (filled on load)"
    )


class SyntheticSpec(BaseModel):
    """Parameters of the planted-informative-neighbor graph generator."""

    num_nodes: int = Field(default=2000, ge=4, description="Number of nodes")
    num_communities: int = Field(default=4, ge=2, description="Communities (= label count)")
    feature_dim: int = Field(default=32, ge=1, description="Feature dimension M")
    informative_fraction: float = Field(
        default=0.5, description="Expected fraction p_inf of same-community edges"
    )
    mean_degree: float = Field(default=20.0, gt=0, description="Target mean node degree")
    noise_std: float = Field(default=1.0, ge=0, description="Feature noise standard deviation")
    signal_scale: float = Field(
        default=0.25, ge=0, description="Scale of the community centroids (per-node label signal)"
    )
    marker_scale: float = Field(
        default=1.5,
        ge=0,
        description="Offset of informative (+) and uninformative (-) nodes along a shared axis",
    )
    seed: int = Field(default=0, ge=0, description="Generator seed")
    informative_node_fraction: float = Field(
        default=0.5,
        gt=0,
        lt=1,
        description="Fraction of each community whose features sit near the centroid",
    )
    train_fraction: float = Field(default=0.7, gt=0, le=1, description="Train split share")
    val_fraction: float = Field(default=0.1, ge=0, lt=1, description="Validation split share")

    @model_validator(mode="after")
    def check_fractions(self) -> "SyntheticSpec":
        if not 0.0 <= self.informative_fraction <= 1.0:
            raise ValueError(
                f"informative_fraction must lie in [0, 1], got {self.informative_fraction}"
            )
        if self.train_fraction + self.val_fraction > 1.0:
            raise ValueError("train_fraction + val_fraction must not exceed 1")
        if self.num_nodes < 2 * self.num_communities:
            raise ValueError("num_nodes must be at least twice num_communities")
        return self
