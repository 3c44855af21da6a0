"""
Structure-set metrics
Fréchet distance of classifier features, fold score, fold JSD, re-classification
probability, secondary-structure content, diversity, novelty and validation helpers.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import rel_entr

from libs.structures.backbone import LEVELS, Backbone, StructureRecord, as_coords
from libs.structures.geometry import pairwise_tm_proxy, tm_proxy
from libs.structures.secondary_structure import assign_secondary_structure

logger = logging.getLogger(__name__)

COVARIANCE_EPS = 1e-6
FJSD_SCALE = 10.0


# ============================================================================
# Feature-distribution distance
# ============================================================================

@dataclass
class FeatureSetStats:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if sigma.shape != (self.mu.size, self.mu.size):
            raise ValueError(f"Covariance shape {sigma.shape} does not match mean of size {self.mu.size}")
        self.sigma = 0.5 * (sigma + sigma.T)

    @classmethod
    def from_features(cls, features: np.ndarray) -> "FeatureSetStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError("Feature statistics need at least two samples")
        return cls(features.mean(axis=0), np.cov(features, rowvar=False))

    @property
    def dim(self) -> int:
        return int(self.mu.size)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh(0.5 * (matrix + matrix.T))
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fpsd(stats_gen: FeatureSetStats, stats_ref: FeatureSetStats, eps: float = COVARIANCE_EPS) -> float:
    """‖Δμ‖² + tr(Σg + Σr − 2(Σg Σr)^½) with 1e-6·I added to both covariances."""
    if stats_gen.dim != stats_ref.dim:
        raise ValueError(f"Feature dimensions differ: {stats_gen.dim} vs {stats_ref.dim}")
    offset = np.eye(stats_gen.dim) * eps
    sg, sr = stats_gen.sigma + offset, stats_ref.sigma + offset
    root_g = _psd_sqrt(sg)
    # tr((Σg Σr)^½) = tr((Σg^½ Σr Σg^½)^½), the latter symmetric PSD
    covmean_trace = float(np.trace(_psd_sqrt(root_g @ sr @ root_g)))
    diff = stats_gen.mu - stats_ref.mu
    return max(0.0, float(diff @ diff + np.trace(sg) + np.trace(sr) - 2.0 * covmean_trace))


# ============================================================================
# Classifier-output scores
# ============================================================================

def _as_probabilities(predictions: np.ndarray) -> np.ndarray:
    probs = np.asarray(predictions, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"Expected (n_samples, n_classes) predictions, got {probs.shape}")
    return probs


def fold_score(predictions: np.ndarray) -> float:
    """exp of the mean KL(p(·|x) ‖ p(·)), natural log; lies in [1, K]."""
    probs = _as_probabilities(predictions)
    if probs.shape[0] < 2:
        raise ValueError("fold_score needs at least two samples")
    marginal = probs.mean(axis=0)
    kl = rel_entr(probs, marginal[None, :]).sum(axis=1)
    return float(np.exp(kl.mean()))


def jensen_shannon_bits(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"Distributions have different supports: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    nats = 0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum()
    return float(nats / np.log(2.0))


def fjsd(preds_gen: np.ndarray, preds_ref: np.ndarray) -> float:
    """10 × base-2 JSD between the marginal predicted class distributions; in [0, 10]."""
    p = _as_probabilities(preds_gen).mean(axis=0)
    q = _as_probabilities(preds_ref).mean(axis=0)
    return float(np.clip(FJSD_SCALE * jensen_shannon_bits(p, q), 0.0, FJSD_SCALE))


def fjsd_levels(
    preds_gen: Dict[str, np.ndarray], preds_ref: Dict[str, np.ndarray]
) -> Dict[str, float]:
    """Per-level fJSD plus their mean under ``"mean"``."""
    scores = {level: fjsd(preds_gen[level], preds_ref[level]) for level in LEVELS}
    scores["mean"] = float(np.mean([scores[level] for level in LEVELS]))
    return scores


@dataclass
class ReclassificationResult:
    mean_probability: float
    n_scored: int
    n_skipped: int


def reclassification_probability(
    probabilities: np.ndarray, targets: Sequence[Optional[int]]
) -> ReclassificationResult:
    """Mean p(target | x); samples without a target at this level are skipped and counted."""
    probs = _as_probabilities(probabilities)
    if len(targets) != probs.shape[0]:
        raise ValueError("One target per prediction row is required")
    values = [probs[i, target] for i, target in enumerate(targets) if target is not None]
    skipped = len(targets) - len(values)
    if skipped:
        logger.info("Re-classification skipped %s samples without a label at this level", skipped)
    mean = float(np.mean(values)) if values else float("nan")
    return ReclassificationResult(mean_probability=mean, n_scored=len(values), n_skipped=skipped)


# ============================================================================
# Structural content, diversity and novelty
# ============================================================================

def secondary_structure_content(backbones: Sequence[Backbone | np.ndarray]) -> Dict[str, float]:
    """Mean helix/strand/coil fractions over a set (each per-structure triple sums to 1)."""
    fractions = np.array(
        [
            [ss.alpha, ss.beta, ss.coil]
            for ss in (assign_secondary_structure(Backbone(as_coords(b))) for b in backbones)
        ]
    )
    mean = fractions.mean(axis=0)
    return {"helix": float(mean[0]), "strand": float(mean[1]), "coil": float(mean[2])}


def cluster_diversity(
    backbones: Sequence[Backbone | np.ndarray], threshold: float = 0.5
) -> Tuple[float, int]:
    """Single-linkage clusters under tm_proxy ≥ threshold; returns (clusters / samples, clusters)."""
    if not backbones:
        raise ValueError("cluster_diversity needs at least one structure")
    lengths = {as_coords(b).shape[0] for b in backbones}
    if len(lengths) != 1:
        raise ValueError(f"cluster_diversity compares equal-length chains, got lengths {sorted(lengths)}")
    scores = pairwise_tm_proxy(backbones)
    n_clusters, _ = connected_components(csr_matrix(scores >= threshold), directed=False)
    return n_clusters / len(backbones), int(n_clusters)


@dataclass
class NoveltyResult:
    mean_max_tm: Optional[float]
    n_scored: int
    n_skipped: int
    # length -> (samples, references, mean best score or None)
    per_length: Dict[int, Tuple[int, int, Optional[float]]] = field(default_factory=dict)


def novelty(
    samples: Sequence[Backbone | np.ndarray],
    reference: Sequence[Backbone | np.ndarray],
) -> NoveltyResult:
    """Mean over samples of the best tm_proxy against same-length references (lower is more novel)."""
    buckets: Dict[int, List[np.ndarray]] = defaultdict(list)
    for ref in reference:
        coords = as_coords(ref)
        buckets[coords.shape[0]].append(coords)

    best: List[float] = []
    skipped = 0
    counts: Dict[int, int] = defaultdict(int)
    scores: Dict[int, List[float]] = defaultdict(list)
    for sample in samples:
        coords = as_coords(sample)
        length = coords.shape[0]
        counts[length] += 1
        if not buckets.get(length):
            skipped += 1
            logger.warning("No reference structures of length %s; sample skipped for novelty", length)
            continue
        best.append(max(tm_proxy(coords, ref) for ref in buckets[length]))
        scores[length].append(best[-1])
    return NoveltyResult(
        mean_max_tm=float(np.mean(best)) if best else None,
        n_scored=len(best),
        n_skipped=skipped,
        per_length={
            length: (n, len(buckets.get(length, [])), float(np.mean(scores[length])) if scores[length] else None)
            for length, n in sorted(counts.items())
        },
    )


def designability_from_scrmsd(scrmsd: Sequence[float], threshold: float = 2.0) -> float:
    """Designable fraction from externally computed self-consistency RMSDs (Å)."""
    values = np.asarray(scrmsd, dtype=np.float64)
    if values.size == 0:
        raise ValueError("No scRMSD values supplied")
    return float((values < threshold).mean())


# ============================================================================
# Validation helpers
# ============================================================================

def fold_disjoint_split(
    records: Sequence[StructureRecord],
    rng: np.random.Generator,
    level: str = "T",
    fraction: float = 0.5,
) -> Tuple[List[StructureRecord], List[StructureRecord]]:
    """Split so that no ``level`` class appears on both sides."""
    groups: Dict[Optional[int], List[StructureRecord]] = defaultdict(list)
    for record in records:
        label = record.primary_label
        groups[None if label is None else label.get(level)].append(record)
    keys = sorted(groups, key=lambda k: (k is None, k if k is not None else -1))
    if len(keys) < 2:
        raise ValueError("A fold-disjoint split needs at least two classes")
    order = [keys[i] for i in rng.permutation(len(keys))]
    n_first = min(max(1, int(round(fraction * len(order)))), len(order) - 1)
    first = [r for key in order[:n_first] for r in groups[key]]
    second = [r for key in order[n_first:] for r in groups[key]]
    return first, second


def random_split(
    records: Sequence[StructureRecord], rng: np.random.Generator, fraction: float = 0.5
) -> Tuple[List[StructureRecord], List[StructureRecord]]:
    order = rng.permutation(len(records))
    cut = int(round(fraction * len(records)))
    return [records[i] for i in order[:cut]], [records[i] for i in order[cut:]]


def add_coordinate_noise(
    backbones: Sequence[Backbone | np.ndarray], sigma: float, rng: np.random.Generator
) -> List[Backbone]:
    """Isotropic Gaussian jitter of ``sigma`` Å on every coordinate."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return [
        Backbone(as_coords(b) + sigma * rng.standard_normal(as_coords(b).shape)) for b in backbones
    ]
