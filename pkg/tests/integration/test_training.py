"""Integration tests for denoiser training."""

from pathlib import Path

import numpy as np
import torch

from apps.flow.models.denoiser import Denoiser
from apps.flow.schemas.training import ObjectiveConfig
from apps.flow.services.checkpoint_store import load_denoiser
from apps.flow.services.equivariance import equivariance_analysis
from apps.flow.services.hardware import HARDWARE_FILE
from apps.flow.services.sampler import DenoiserField
from apps.flow.workers.trainer import BAD_CHECKPOINT, FINAL_CHECKPOINT, length_batches, train_denoiser
from libs.structures.clustering import build_manifest


def test_length_batches_are_uniform(toy_records, toy_vocab, rng: np.random.Generator) -> None:
    manifest = build_manifest(toy_records, toy_vocab)
    by_id = {r.source_id: r for r in toy_records}
    batches = length_batches(manifest, by_id, 4, rng)
    for _ in range(5):
        batch = next(batches)
        assert len(batch) == 4
        assert len({r.length for r in batch}) == 1


def test_training_reduces_loss(tiny_model_config, toy_records, toy_vocab, run_dir: Path) -> None:
    torch.manual_seed(0)
    model = Denoiser(tiny_model_config)
    manifest = build_manifest(toy_records, toy_vocab, dataset_id="toy")
    config = ObjectiveConfig(
        learning_rate=1e-3, batch_size=4, n_steps=400, log_every=100, checkpoint_every=1000, save_bad_at=50
    )
    summary = train_denoiser(model, toy_records, manifest, config, run_dir, seed=0, progress=False)

    assert summary.steps == 400
    assert np.all(np.isfinite(summary.losses))
    assert len(summary.cfm_losses) == 400
    assert np.mean(summary.losses[-50:]) <= 0.5 * np.mean(summary.losses[:50])
    assert 0.3 < summary.self_conditioning_rate < 0.7
    assert summary.checkpoint == run_dir / FINAL_CHECKPOINT
    assert summary.bad_checkpoint == run_dir / BAD_CHECKPOINT

    restored, metadata = load_denoiser(summary.checkpoint)
    assert metadata.step == 400
    assert metadata.dataset_id == "toy"
    assert metadata.label_vocabulary == toy_vocab
    _, bad_meta = load_denoiser(summary.bad_checkpoint)
    assert bad_meta.step == 50

    report = equivariance_analysis(
        DenoiserField(restored), [r.backbone for r in toy_records], [0.3, 0.7], 4, np.random.default_rng(1)
    )
    assert all(u <= r + 1e-9 for u, r in zip(report.e_aligned, report.e_rotated))


def _run_files(root: Path) -> dict:
    return {
        path.relative_to(root): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file() and path.name != HARDWARE_FILE
    }


def test_same_seed_gives_identical_checkpoints(tiny_model_config, toy_records, toy_vocab, tmp_path: Path) -> None:
    manifest = build_manifest(toy_records, toy_vocab, dataset_id="toy")
    config = ObjectiveConfig(batch_size=4, n_steps=12, checkpoint_every=5, save_bad_at=3)
    for name in ("first", "second"):
        torch.manual_seed(0)
        train_denoiser(Denoiser(tiny_model_config), toy_records, manifest, config, tmp_path / name, seed=3, progress=False)

    first, second = _run_files(tmp_path / "first"), _run_files(tmp_path / "second")
    assert (tmp_path / "first" / HARDWARE_FILE).exists()
    assert len(first) >= 4 * 4
    assert first.keys() == second.keys()
    for name, blob in first.items():
        assert blob == second[name], name
