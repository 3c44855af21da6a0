"""Training loop for the denoiser (full training and adapter fine-tuning)."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from apps.flow.errors import NonFiniteError
from apps.flow.models.denoiser import Denoiser
from apps.flow.models.lora import has_lora, merge_lora
from apps.flow.schemas.training import ObjectiveConfig
from apps.flow.services.checkpoint_store import CheckpointMetadata, save_checkpoint
from apps.flow.services.hardware import write_hardware_log
from apps.flow.services.objective import make_optimizer, training_step
from libs.structures.backbone import StructureRecord
from libs.structures.clustering import DatasetManifest, cluster_balanced_iterator

logging.basicConfig(
    level=logging.INFO, format="[%(asctime)s] %(levelname)s: %(message)s"
)
logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "checkpoint"
BAD_CHECKPOINT = "bad_checkpoint"
PERIODIC_DIR = "checkpoints"


@dataclass
class TrainingSummary:
    steps: int
    losses: List[float] = field(default_factory=list)
    cfm_losses: List[float] = field(default_factory=list)
    self_conditioning_rate: float = 0.0
    checkpoint: Optional[Path] = None
    bad_checkpoint: Optional[Path] = None


def length_batches(
    manifest: DatasetManifest,
    records: Mapping[str, StructureRecord],
    batch_size: int,
    rng: np.random.Generator,
) -> Iterator[List[StructureRecord]]:
    """Cluster-balanced stream grouped into equal-length batches."""
    if manifest.n_clusters == 0:
        raise ValueError("Cannot train on an empty dataset")
    pending: Dict[int, List[StructureRecord]] = defaultdict(list)
    for record in cluster_balanced_iterator(manifest, rng, records, n_epochs=None):
        bucket = pending[record.length]
        bucket.append(record)
        if len(bucket) == batch_size:
            yield list(bucket)
            bucket.clear()


def _save(
    model: Denoiser, directory: Path, step: int, seed: int, manifest: DatasetManifest, extra: Dict
) -> Path:
    plain = merge_lora(model) if has_lora(model) else model
    metadata = CheckpointMetadata(
        kind="denoiser",
        seed=seed,
        step=step,
        dataset_id=manifest.dataset_id,
        vocabulary=manifest.vocabulary.to_dict(),
        extra=extra,
    )
    return save_checkpoint(plain, directory, metadata)


def train_denoiser(
    model: Denoiser,
    records: Sequence[StructureRecord],
    manifest: DatasetManifest,
    config: ObjectiveConfig,
    out_dir: Path | str,
    seed: int = 0,
    parameters: Optional[Sequence[torch.nn.Parameter]] = None,
    n_steps: Optional[int] = None,
    progress: bool = True,
) -> TrainingSummary:
    """Run ``n_steps`` optimizer steps; ``parameters`` restricts the trained set (adapters)."""
    out_dir = Path(out_dir)
    n_steps = n_steps or config.n_steps
    rng = np.random.default_rng(seed)
    by_id = {record.source_id: record for record in records}
    params = list(parameters) if parameters is not None else list(model.parameters())
    optimizer = make_optimizer(params, config.learning_rate)
    extra = {"adapter_training": parameters is not None}
    write_hardware_log(out_dir)

    summary = TrainingSummary(steps=0)
    self_cond_count = 0
    window: List[float] = []
    batches = length_batches(manifest, by_id, config.batch_size, rng)
    logger.info("Training for %s steps (batch=%s, lr=%s)", n_steps, config.batch_size, config.learning_rate)
    for step in tqdm(range(1, n_steps + 1), disable=not progress, desc="train"):
        batch = next(batches)
        try:
            result = training_step(model, optimizer, batch, config, rng, step=step)
        except NonFiniteError:
            logger.error("Aborting training at step %s: non-finite loss", step)
            raise
        summary.losses.append(result.loss)
        summary.cfm_losses.append(result.cfm)
        summary.steps = step
        self_cond_count += int(result.self_conditioned)
        window.append(result.loss)

        if step % config.log_every == 0:
            logger.info(
                "step %s: loss=%.4f cfm=%.4f distogram=%.4f self_cond_rate=%.2f",
                step, float(np.mean(window)), result.cfm, result.distogram, self_cond_count / step,
            )
            window.clear()
        if config.save_bad_at is not None and step == config.save_bad_at:
            summary.bad_checkpoint = _save(model, out_dir / BAD_CHECKPOINT, step, seed, manifest, extra)
        if step % config.checkpoint_every == 0 and step != n_steps:
            _save(model, out_dir / PERIODIC_DIR / f"step_{step:06d}", step, seed, manifest, extra)

    summary.self_conditioning_rate = self_cond_count / max(summary.steps, 1)
    summary.checkpoint = _save(model, out_dir / FINAL_CHECKPOINT, summary.steps, seed, manifest, extra)
    return summary
