"""Integration test: adapter fine-tuning on a shifted subset."""

import copy
from pathlib import Path

import numpy as np
import torch

from apps.flow.models.denoiser import Denoiser
from apps.flow.models.lora import apply_lora, has_lora, lora_parameters, merge_lora
from apps.flow.schemas.training import ObjectiveConfig
from apps.flow.services.checkpoint_store import load_denoiser
from apps.flow.workers.trainer import train_denoiser
from libs.structures.clustering import build_manifest


def test_lora_finetune_keeps_base_and_merges(tiny_model_config, toy_records, toy_vocab, run_dir: Path) -> None:
    model = Denoiser(tiny_model_config).double()
    config = ObjectiveConfig(learning_rate=1e-3, batch_size=4, n_steps=20, checkpoint_every=1000)
    manifest = build_manifest(toy_records, toy_vocab)
    train_denoiser(model, toy_records, manifest, config, run_dir / "base", progress=False)
    base_state = copy.deepcopy(model.state_dict())

    shifted = [r for r in toy_records if r.metadata["class"] == "beta_meander"]
    shifted_manifest = build_manifest(shifted, toy_vocab)
    apply_lora(model, rank=4, scale=8.0)
    summary = train_denoiser(
        model, shifted, shifted_manifest, config.model_copy(update={"n_steps": 40}), run_dir / "lora",
        seed=1, parameters=lora_parameters(model), progress=False,
    )
    assert has_lora(model)
    assert np.all(np.isfinite(summary.losses))

    adapted_state = model.state_dict()
    for name, value in base_state.items():
        prefix, _, leaf = name.rpartition(".")
        current = adapted_state.get(f"{prefix}.base.{leaf}", adapted_state.get(name))
        assert torch.equal(current, value), name
    assert any(torch.count_nonzero(p) for p in lora_parameters(model) if p.shape[1] == 4)

    x_t = torch.randn(2, 40, 3, dtype=torch.float64)
    t = torch.tensor([0.2, 0.8], dtype=torch.float64)
    labels = model.label_tensor([None, shifted[0].primary_label])
    with torch.no_grad():
        adapted = model(x_t, t, label_ids=labels).velocity
        merged = merge_lora(model)(x_t, t, label_ids=labels).velocity
        restored, _ = load_denoiser(summary.checkpoint)
        stored = restored(x_t, t, label_ids=labels).velocity.double()
    assert torch.allclose(merged, adapted, atol=1e-5)
    assert torch.allclose(stored, adapted, atol=1e-3)
