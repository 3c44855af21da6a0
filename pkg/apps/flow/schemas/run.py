"""Run configuration document (``--config`` JSON, saved as ``run_config.json``)"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from .model import ClassifierConfig, LoraConfig, ModelConfig
from .sampling import GuidanceConfig, SamplerConfig
from .training import ObjectiveConfig

RUN_CONFIG_FILE = "run_config.json"
# eval and reclass may write into a sample directory; they keep their own file there
EVAL_CONFIG_FILE = "eval_config.json"
RECLASS_CONFIG_FILE = "reclass_config.json"


class DataConfig(BaseModel):
    dataset: Optional[str] = Field(None, description="Dataset directory written by toydata")
    n_structures: int = Field(600, gt=0, description="Toy dataset size")
    length: int = Field(64, ge=16, description="Toy chain length")
    jitter: float = Field(0.05, ge=0.0, le=0.5, description="Toy coordinate jitter, Å")
    apply_filters: bool = True


class MetricsConfig(BaseModel):
    sample_budget: int = Field(500, gt=0)
    diversity_threshold: float = Field(0.5, gt=0.0, le=1.0)
    equivariance_mc_samples: int = Field(64, gt=0)
    equivariance_t_grid: List[float] = Field(
        default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9]
    )
    designability_threshold: float = Field(2.0, gt=0.0, description="scRMSD cutoff, Å")


class RunConfig(BaseModel):
    """Fully resolved configuration of one command invocation."""

    seed: int = 0
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    objective: ObjectiveConfig = Field(default_factory=ObjectiveConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    lora: LoraConfig = Field(default_factory=LoraConfig)

    @classmethod
    def load(cls, path: Path | str) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.model_validate(raw)

    def updated(self, section: str, **values: Any) -> "RunConfig":
        """Copy with ``values`` merged into one section, re-validated."""
        document: Dict[str, Any] = self.model_dump()
        document[section].update({k: v for k, v in values.items() if v is not None})
        return RunConfig.model_validate(document)

    def save(self, directory: Path | str, filename: str = RUN_CONFIG_FILE) -> Path:
        path = Path(directory) / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path
