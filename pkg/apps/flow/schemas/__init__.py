"""
Pydantic schemas for run configuration and reports
"""

from .model import ClassifierConfig, LoraConfig, ModelConfig
from .report import LengthBucketRow, StructureSetReport
from .run import DataConfig, MetricsConfig, RunConfig
from .sampling import GuidanceConfig, SamplerConfig, StochasticitySchedule
from .training import DropoutSchedule, ObjectiveConfig, TimeSampler

__all__ = [
    "ClassifierConfig",
    "LoraConfig",
    "ModelConfig",
    "LengthBucketRow",
    "StructureSetReport",
    "DataConfig",
    "MetricsConfig",
    "RunConfig",
    "GuidanceConfig",
    "SamplerConfig",
    "StochasticitySchedule",
    "DropoutSchedule",
    "ObjectiveConfig",
    "TimeSampler",
]
