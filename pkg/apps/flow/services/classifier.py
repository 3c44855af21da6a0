"""Fold classifier training and inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from apps.flow.models.fold_classifier import FoldClassifier, ProteinGraph, build_graph
from apps.flow.schemas.model import ClassifierConfig
from libs.structures.backbone import LEVELS, Backbone, FoldLabel, StructureRecord

from .metrics import ReclassificationResult, reclassification_probability
from .objective import pick_label

logger = logging.getLogger(__name__)

IGNORE = -100


@dataclass
class ClassifierOutput:
    probabilities: Dict[str, np.ndarray]  # level -> (K_level,)
    features: np.ndarray  # (hidden_dim,)


@dataclass
class ClassifierTrainingResult:
    model: FoldClassifier
    epoch_losses: List[float]
    excluded_classes: Dict[str, List[int]] = field(default_factory=dict)


def _targets(labels: Sequence[FoldLabel], level: str) -> torch.Tensor:
    return torch.tensor(
        [IGNORE if label.get(level) is None else label.get(level) for label in labels],
        dtype=torch.long,
    )


def classification_loss(logits: Sequence[torch.Tensor], labels: Sequence[FoldLabel]) -> torch.Tensor:
    """Sum over levels of the cross-entropy on samples labelled at that level."""
    total = logits[0].new_zeros(())
    for level, level_logits in zip(LEVELS, logits):
        target = _targets(labels, level)
        if (target != IGNORE).any():
            total = total + F.cross_entropy(level_logits, target, ignore_index=IGNORE)
    return total


def train_classifier(
    records: Sequence[StructureRecord],
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> ClassifierTrainingResult:
    """Train from scratch; multi-domain records contribute one random label per epoch."""
    labelled = [record for record in records if record.labels]
    if not labelled:
        raise ValueError("train_classifier needs records carrying fold labels")
    if len(labelled) < len(records):
        logger.warning("Skipping %s unlabelled records", len(records) - len(labelled))

    excluded: Dict[str, List[int]] = {}
    for level, size in zip(LEVELS, config.vocab_sizes):
        seen = {label.get(level) for record in labelled for label in record.labels}
        missing = [k for k in range(size) if k not in seen]
        if missing:
            logger.warning("Level %s classes %s have no training examples; excluded from accuracy", level, missing)
            excluded[level] = missing

    torch.manual_seed(int(rng.integers(2**31 - 1)))
    model = FoldClassifier(config)
    graphs = [build_graph(record.backbone, config) for record in labelled]
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999))

    epoch_losses: List[float] = []
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(labelled))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            labels = [pick_label(labelled[i], rng) for i in chunk]
            logits, _ = model([graphs[i] for i in chunk])
            loss = classification_loss(logits, labels)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        epoch_losses.append(float(np.mean(losses)))
        logger.info("Classifier epoch %s/%s: loss=%.4f", epoch + 1, config.epochs, epoch_losses[-1])
    model.eval()
    return ClassifierTrainingResult(model=model, epoch_losses=epoch_losses, excluded_classes=excluded)


@torch.no_grad()
def predict(
    model: FoldClassifier,
    backbones: Sequence[Backbone | np.ndarray],
    batch_size: int = 32,
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Per-level probabilities (n, K_level) and features (n, hidden_dim)."""
    model.eval()
    probs: Dict[str, List[np.ndarray]] = {level: [] for level in LEVELS}
    feats: List[np.ndarray] = []
    graphs: List[ProteinGraph] = [build_graph(b, model.config) for b in backbones]
    for start in range(0, len(graphs), batch_size):
        logits, features = model(graphs[start : start + batch_size])
        for level, level_logits in zip(LEVELS, logits):
            probs[level].append(torch.softmax(level_logits, dim=-1).numpy())
        feats.append(features.numpy())
    if not feats:
        empty = {level: np.zeros((0, size)) for level, size in zip(LEVELS, model.config.vocab_sizes)}
        return empty, np.zeros((0, model.feature_dim))
    return {level: np.concatenate(p) for level, p in probs.items()}, np.concatenate(feats)


def classify(model: FoldClassifier, backbone: Backbone | np.ndarray) -> ClassifierOutput:
    probs, features = predict(model, [backbone])
    return ClassifierOutput(
        probabilities={level: p[0] for level, p in probs.items()}, features=features[0]
    )


def accuracy(
    model: FoldClassifier,
    records: Sequence[StructureRecord],
    level: str = "T",
    excluded: Sequence[int] = (),
) -> float:
    """Top-1 accuracy on the primary label; classes in ``excluded`` are not scored."""
    scored = [
        r for r in records
        if r.primary_label is not None
        and r.primary_label.get(level) is not None
        and r.primary_label.get(level) not in excluded
    ]
    if not scored:
        raise ValueError(f"No records labelled at level {level}")
    probs, _ = predict(model, [r.backbone for r in scored])
    hits = probs[level].argmax(axis=1) == np.array([r.primary_label.get(level) for r in scored])
    return float(hits.mean())


def reclassify(
    model: FoldClassifier,
    backbones: Sequence[Backbone],
    labels: Sequence[Optional[FoldLabel]],
    level: str = "T",
) -> ReclassificationResult:
    """Mean classifier probability of each sample's conditioning label."""
    probs, _ = predict(model, backbones)
    targets = [None if label is None else label.get(level) for label in labels]
    return reclassification_probability(probs[level], targets)
