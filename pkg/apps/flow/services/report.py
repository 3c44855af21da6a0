"""Structure-set evaluation and report files (JSON document + CSV tables)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from apps.flow.models.fold_classifier import FoldClassifier
from apps.flow.schemas.report import LengthBucketRow, StructureSetReport
from apps.flow.schemas.run import MetricsConfig
from libs.structures.backbone import LEVELS, Backbone
from libs.structures.geometry import TM_MIN_LENGTH

from .classifier import predict
from .metrics import (
    FeatureSetStats,
    cluster_diversity,
    designability_from_scrmsd,
    fjsd_levels,
    fold_score,
    fpsd,
    novelty,
    secondary_structure_content,
)

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
METRICS_CSV = "metrics.csv"
LENGTHS_CSV = "length_buckets.csv"


def evaluate_structure_set(
    samples: Sequence[Backbone],
    reference: Sequence[Backbone],
    classifier: FoldClassifier,
    config: Optional[MetricsConfig] = None,
    scrmsd: Optional[Sequence[float]] = None,
) -> StructureSetReport:
    """Distributional metrics use every sample; diversity and novelty use the designable subset when scRMSDs are given."""
    config = config or MetricsConfig()
    if len(samples) < 2 or len(reference) < 2:
        raise ValueError("Evaluation needs at least two samples and two reference structures")
    if len(samples) > config.sample_budget:
        logger.warning("Evaluating %s samples, above the budget of %s", len(samples), config.sample_budget)

    probs_gen, feats_gen = predict(classifier, samples)
    probs_ref, feats_ref = predict(classifier, reference)
    fpsd_value = fpsd(FeatureSetStats.from_features(feats_gen), FeatureSetStats.from_features(feats_ref))
    scores = {level: fold_score(probs_gen[level]) for level in LEVELS}
    jsd = fjsd_levels(probs_gen, probs_ref)
    content = secondary_structure_content(samples)

    structural = list(samples)
    designable = None
    if scrmsd is not None:
        designable = designability_from_scrmsd(scrmsd, config.designability_threshold)
        structural = [s for s, value in zip(samples, scrmsd) if value < config.designability_threshold]

    ratio, n_clusters = None, None
    lengths = {s.length for s in structural}
    if structural and len(lengths) == 1 and lengths.pop() >= TM_MIN_LENGTH:
        ratio, n_clusters = cluster_diversity(structural, config.diversity_threshold)
    elif structural:
        logger.warning("Diversity skipped: needs equal-length chains of at least %s residues", TM_MIN_LENGTH)

    eligible = [s for s in structural if s.length >= TM_MIN_LENGTH]
    novel = novelty(eligible, [r for r in reference if r.length >= TM_MIN_LENGTH])
    buckets = [
        LengthBucketRow(length=length, n_samples=n_s, n_reference=n_r, novelty=score)
        for length, (n_s, n_r, score) in novel.per_length.items()
    ]
    return StructureSetReport(
        n_samples=len(samples),
        n_reference=len(reference),
        fpsd=fpsd_value,
        fold_score=scores,
        fjsd=jsd,
        helix_fraction=content["helix"],
        strand_fraction=content["strand"],
        coil_fraction=content["coil"],
        diversity_ratio=ratio,
        n_clusters=n_clusters,
        novelty=novel.mean_max_tm,
        novelty_skipped=novel.n_skipped,
        designable_fraction=designable,
        length_buckets=buckets,
    )


def write_report(report: StructureSetReport, directory: Path | str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / REPORT_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    pd.DataFrame(report.metric_rows(), columns=["metric", "level", "value"]).to_csv(
        directory / METRICS_CSV, index=False
    )
    pd.DataFrame(
        [row.model_dump() for row in report.length_buckets],
        columns=["length", "n_samples", "n_reference", "novelty"],
    ).to_csv(directory / LENGTHS_CSV, index=False)
    logger.info("Wrote report to %s", directory)
    return directory


def report_is_finite(report: StructureSetReport) -> bool:
    values = [row["value"] for row in report.metric_rows()]
    return bool(np.all(np.isfinite(np.asarray(values, dtype=np.float64))))
