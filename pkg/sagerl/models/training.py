"""
Training configuration models for sagerl.

Defaults follow the published protocol: hidden size 512, 30 neighbors per hop,
Adam with lr 0.01, batch 32, 10 epochs for the classifier; 50 epochs, batch
512, lr 0.001 for the value regressor; discount 0.9.
"""

from typing import List, Literal

from pydantic import BaseModel, Field, model_validator

RewardMode = Literal["all_hop", "last_hop"]
RewardVariant = Literal["all_hop", "first_hop", "last_hop"]

FIRST_HOP_GAMMA = 0.001


class AdamConfig(BaseModel):
    """Adam optimizer hyperparameters."""

    learning_rate: float = Field(default=0.01, gt=0, description="Step size")
    beta1: float = Field(default=0.9, ge=0, lt=1, description="First-moment decay")
    beta2: float = Field(default=0.999, ge=0, lt=1, description="Second-moment decay")
    epsilon: float = Field(default=1e-8, gt=0, description="Denominator guard")


class SageConfig(BaseModel):
    """GraphSAGE model and training-loop configuration."""

    num_layers: int = Field(default=2, ge=1, le=3, description="Layer count K")
    hidden_dim: int = Field(default=512, ge=1, description="Hidden width M'")
    aggregator: Literal["mean_concat", "mean_add"] = Field(
        default="mean_concat", description="Neighbor/self combination"
    )
    fanouts: List[int] = Field(default=[30, 30], description="Sample sizes N^1..N^K")
    learning_rate: float = Field(default=0.01, gt=0, description="Adam learning rate")
    batch_size: int = Field(default=32, ge=1, description="Roots per mini-batch")
    epochs: int = Field(default=10, ge=1, description="Passes over the train nodes")
    aux_heads: bool = Field(
        default=False, description="Add classifier heads at depths 1..K-1 (all-hop rewards)"
    )
    eval_batch_size: int = Field(default=256, ge=1, description="Roots per prediction batch")
    precision: Literal["float32", "float64"] = Field(
        default="float32", description="Working precision of parameters and activations"
    )

    @model_validator(mode="after")
    def check_fanouts(self) -> "SageConfig":
        if len(self.fanouts) != self.num_layers:
            raise ValueError(
                f"fanouts has {len(self.fanouts)} entries but num_layers is {self.num_layers}"
            )
        if any(n < 1 for n in self.fanouts):
            raise ValueError(f"every fanout must be >= 1, got {self.fanouts}")
        return self

    def adam(self) -> AdamConfig:
        return AdamConfig(learning_rate=self.learning_rate)


class RLConfig(BaseModel):
    """Value-learning configuration."""

    gamma: float = Field(default=0.9, gt=0, le=1, description="Discount rate")
    reward_mode: RewardMode = Field(default="all_hop", description="Which per-hop rewards count")
    regressor_epochs: int = Field(default=50, ge=1, description="Regressor fit epochs")
    regressor_batch_size: int = Field(default=512, ge=1, description="Regressor batch size")
    regressor_learning_rate: float = Field(default=0.001, gt=0, description="Regressor lr")
    regressor_optimizer: Literal["adam", "sgd"] = Field(
        default="adam", description="Optimizer for the regressor fit"
    )

    @classmethod
    def for_variant(cls, variant: RewardVariant, **overrides) -> "RLConfig":
        """
        Build the config of one reward variant.

        first_hop is all_hop with a very small discount, so only the depth-1
        reward contributes meaningfully to the return.

        Args:
            variant: "all_hop", "first_hop" or "last_hop"
            **overrides: Other RLConfig fields

        Returns:
            RLConfig for the variant
        """
        if variant == "first_hop":
            return cls(**{**overrides, "reward_mode": "all_hop", "gamma": FIRST_HOP_GAMMA})
        return cls(**{**overrides, "reward_mode": variant})
