"""Training objective schemas"""

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class TimeSampler(BaseModel):
    """Distribution of interpolation times used during training."""

    kind: Literal["mixture", "uniform", "beta", "logit_normal"] = "mixture"
    uniform_weight: float = Field(0.02, ge=0.0, le=1.0)
    beta_weight: float = Field(0.98, ge=0.0, le=1.0)
    beta_a: float = Field(1.9, gt=0.0)
    beta_b: float = Field(1.0, gt=0.0)
    logit_mean: float = 0.0
    logit_std: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def _weights(self) -> "TimeSampler":
        if abs(self.uniform_weight + self.beta_weight - 1.0) > 1e-9:
            raise ValueError("uniform_weight and beta_weight must sum to 1")
        return self


class DropoutSchedule(BaseModel):
    """Probabilities of keeping none, C, CA or the full CAT label."""

    p_none: float = Field(0.5, ge=0.0, le=1.0)
    p_c_only: float = Field(0.1, ge=0.0, le=1.0)
    p_ca: float = Field(0.15, ge=0.0, le=1.0)
    p_cat: float = Field(0.25, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _normalised(self) -> "DropoutSchedule":
        if abs(self.p_none + self.p_c_only + self.p_ca + self.p_cat - 1.0) > 1e-9:
            raise ValueError("Label dropout probabilities must sum to 1")
        return self

    @property
    def probabilities(self) -> tuple[float, float, float, float]:
        return (self.p_none, self.p_c_only, self.p_ca, self.p_cat)


class ObjectiveConfig(BaseModel):
    time_sampler: TimeSampler = Field(default_factory=TimeSampler)
    label_dropout: DropoutSchedule = Field(default_factory=DropoutSchedule)
    self_conditioning_prob: float = Field(0.5, ge=0.0, le=1.0)
    distogram_weight: float = Field(1.0, ge=0.0)
    distogram_min_t: float = Field(0.3, ge=0.0, le=1.0)
    learning_rate: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(8, gt=0)
    n_steps: int = Field(2000, gt=0)
    log_every: int = Field(50, gt=0)
    checkpoint_every: int = Field(500, gt=0)
    save_bad_at: int | None = Field(
        None, gt=0, description="Step at which to keep an early checkpoint for autoguidance"
    )
