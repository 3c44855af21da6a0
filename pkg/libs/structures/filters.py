"""Structure-quality filters: length, coil content, compactness and confidence."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .backbone import StructureRecord
from .geometry import radius_of_gyration
from .secondary_structure import MIN_LENGTH, assign_secondary_structure

logger = logging.getLogger(__name__)

REASON_LENGTH = "length"
REASON_COIL = "coil_fraction"
REASON_RGYR = "radius_of_gyration"
REASON_MEAN_CONFIDENCE = "mean_confidence"
REASON_CONFIDENCE_STD = "confidence_std"


class FilterConfig(BaseModel):
    min_len: int = Field(32, gt=0)
    max_len: int = Field(256, gt=0)
    max_coil_fraction: float = Field(0.5, gt=0.0, le=1.0)
    max_rgyr: float = Field(30.0, gt=0.0, description="Maximum radius of gyration in Å")
    min_mean_confidence: float = Field(85.0, gt=0.0, le=100.0)
    max_confidence_std: float = Field(15.0, gt=0.0)

    @model_validator(mode="after")
    def _length_order(self) -> "FilterConfig":
        if self.min_len >= self.max_len:
            raise ValueError(f"min_len ({self.min_len}) must be below max_len ({self.max_len})")
        return self


@dataclass
class RejectedRecord:
    record: StructureRecord
    reasons: List[str] = field(default_factory=list)


@dataclass
class FilterStats:
    total_input: int = 0
    kept: int = 0
    rejected: int = 0
    reasons: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "total_input": self.total_input,
            "kept": self.kept,
            "rejected": self.rejected,
            "reasons": dict(self.reasons),
        }


def filter_reasons(record: StructureRecord, cfg: FilterConfig) -> List[str]:
    """All failed criteria for one record, in length -> structure -> confidence order."""
    reasons: List[str] = []
    if not cfg.min_len <= record.length <= cfg.max_len:
        reasons.append(REASON_LENGTH)
    if record.length >= MIN_LENGTH:
        if assign_secondary_structure(record.backbone).coil > cfg.max_coil_fraction:
            reasons.append(REASON_COIL)
    if radius_of_gyration(record.backbone) > cfg.max_rgyr:
        reasons.append(REASON_RGYR)
    conf = record.per_residue_confidence
    if conf is not None:
        if float(np.mean(conf)) < cfg.min_mean_confidence:
            reasons.append(REASON_MEAN_CONFIDENCE)
        if float(np.std(conf)) > cfg.max_confidence_std:
            reasons.append(REASON_CONFIDENCE_STD)
    return reasons


def apply_filters(
    records: Sequence[StructureRecord], cfg: FilterConfig
) -> Tuple[List[StructureRecord], List[RejectedRecord]]:
    kept: List[StructureRecord] = []
    rejected: List[RejectedRecord] = []
    stats = FilterStats(total_input=len(records))
    for record in records:
        reasons = filter_reasons(record, cfg)
        if reasons:
            rejected.append(RejectedRecord(record=record, reasons=reasons))
            for reason in reasons:
                stats.reasons[reason] = stats.reasons.get(reason, 0) + 1
        else:
            kept.append(record)
    stats.kept, stats.rejected = len(kept), len(rejected)
    logger.info("Filtered structures: %s", stats.to_dict())
    return kept, rejected
