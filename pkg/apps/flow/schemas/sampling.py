"""Sampling schemas: time grid, stochasticity schedule, guidance"""

import math
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

GT_KINDS = ("main", "one_minus_t", "tan", "zero")


class StochasticitySchedule(BaseModel):
    """g(t): weight of the Langevin correction; zero beyond ``cutoff``."""

    kind: Literal["main", "one_minus_t", "tan", "zero"] = "main"
    cutoff: float = Field(0.99, gt=0.0, le=1.0)

    @field_validator("kind", mode="before")
    @classmethod
    def _dashes(cls, value):
        # CLI spelling is "one-minus-t"
        return value.replace("-", "_") if isinstance(value, str) else value

    def g(self, t: float) -> float:
        if self.kind == "zero" or t > self.cutoff:
            return 0.0
        if self.kind == "main":
            return 1.0 / (t + 0.01)
        if self.kind == "one_minus_t":
            return (1.0 - t) / (t + 0.01)
        half_turn = (1.0 - t) * math.pi / 2.0
        return (math.pi / 2.0) * math.sin(half_turn) / (math.cos(half_turn) + 0.01)


class SamplerConfig(BaseModel):
    n_steps: int = Field(400, ge=2)
    gamma: float = Field(0.45, ge=0.0, description="Noise scale; 1 preserves marginals")
    schedule: StochasticitySchedule = Field(default_factory=StochasticitySchedule)
    self_conditioning: bool = True
    n_samples: int = Field(16, gt=0)
    length: int = Field(64, ge=2)
    batch_size: int = Field(16, gt=0)


class GuidanceConfig(BaseModel):
    """Guidance weight ``omega`` and CFG/autoguidance interpolation ``alpha``."""

    omega: float = Field(1.0, ge=0.0)
    alpha: float = Field(0.0, ge=0.0, le=1.0)
    label: Optional[str] = Field(None, description="Fold code C[.A[.T]]; None is unconditional")
    bad_checkpoint: Optional[str] = None

    @model_validator(mode="after")
    def _bad_model(self) -> "GuidanceConfig":
        if self.alpha > 0 and not self.bad_checkpoint:
            raise ValueError("alpha > 0 needs a bad_checkpoint for autoguidance")
        return self
