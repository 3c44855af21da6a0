"""Evaluation report schema"""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class LengthBucketRow(BaseModel):
    length: int
    n_samples: int
    n_reference: int
    novelty: Optional[float] = None


class StructureSetReport(BaseModel):
    """Metric bundle for one generated set against one reference set."""

    n_samples: int
    n_reference: int
    fpsd: float
    fold_score: Dict[str, float] = Field(description="Per level C/A/T, natural-log KL")
    fjsd: Dict[str, float] = Field(description="Per level C/A/T plus 'mean'")
    helix_fraction: float
    strand_fraction: float
    coil_fraction: float
    diversity_ratio: Optional[float] = None
    n_clusters: Optional[int] = None
    novelty: Optional[float] = None
    novelty_skipped: int = 0
    designable_fraction: Optional[float] = None
    length_buckets: List[LengthBucketRow] = Field(default_factory=list)

    def metric_rows(self) -> List[Dict[str, object]]:
        """Flat (metric, level, value) rows for the CSV table."""
        rows: List[Dict[str, object]] = [
            {"metric": "fpsd", "level": "", "value": self.fpsd},
        ]
        rows += [{"metric": "fold_score", "level": k, "value": v} for k, v in self.fold_score.items()]
        rows += [{"metric": "fjsd", "level": k, "value": v} for k, v in self.fjsd.items()]
        for name in ("helix_fraction", "strand_fraction", "coil_fraction", "diversity_ratio",
                     "n_clusters", "novelty", "designable_fraction"):
            value = getattr(self, name)
            if value is not None:
                rows.append({"metric": name, "level": "", "value": float(value)})
        return rows
