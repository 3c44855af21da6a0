"""Unit tests for low-rank adapters."""

import copy

import pytest
import torch
from torch import nn

from apps.flow.errors import LoraError
from apps.flow.models.denoiser import Denoiser
from apps.flow.models.lora import LoraEmbedding, LoraLinear, apply_lora, has_lora, lora_parameters, merge_lora


def _perturb_adapters(model: nn.Module) -> None:
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (LoraLinear, LoraEmbedding)):
                module.lora_b.copy_(0.01 * torch.randn_like(module.lora_b))


def test_adapters_start_as_identity(tiny_denoiser: Denoiser) -> None:
    x_t, t = 5.0 * torch.randn(2, 10, 3), torch.rand(2)
    before = tiny_denoiser(x_t, t).distogram_logits
    apply_lora(tiny_denoiser, rank=4, scale=8.0)
    assert has_lora(tiny_denoiser)
    assert torch.allclose(tiny_denoiser(x_t, t).distogram_logits, before, atol=1e-6)


def test_only_adapter_parameters_train(tiny_denoiser: Denoiser) -> None:
    apply_lora(tiny_denoiser, rank=4, scale=8.0)
    trainable = [p for p in tiny_denoiser.parameters() if p.requires_grad]
    adapters = lora_parameters(tiny_denoiser)
    assert {id(p) for p in trainable} == {id(p) for p in adapters}
    n_layers = sum(isinstance(m, (LoraLinear, LoraEmbedding)) for m in tiny_denoiser.modules())
    assert len(adapters) == 2 * n_layers


def test_merge_matches_adapted_outputs(tiny_denoiser: Denoiser) -> None:
    tiny_denoiser.double()
    base = copy.deepcopy(tiny_denoiser.state_dict())
    apply_lora(tiny_denoiser, rank=4, scale=8.0)
    _perturb_adapters(tiny_denoiser)
    x_t, t = 5.0 * torch.randn(2, 10, 3), torch.rand(2)
    labels = tiny_denoiser.label_tensor([None, None])
    adapted = tiny_denoiser(x_t, t, label_ids=labels)
    merged = merge_lora(tiny_denoiser)
    assert not has_lora(merged)
    out = merged(x_t, t, label_ids=labels)
    assert torch.allclose(out.velocity, adapted.velocity, atol=1e-5)
    assert torch.allclose(out.distogram_logits, adapted.distogram_logits, atol=1e-5)
    adapted_state = tiny_denoiser.state_dict()
    for name, value in base.items():
        prefix, _, leaf = name.rpartition(".")
        current = adapted_state.get(f"{prefix}.base.{leaf}", adapted_state.get(name))
        assert torch.equal(current, value), name


def test_double_attach_and_empty_merge_fail(tiny_denoiser: Denoiser) -> None:
    with pytest.raises(LoraError):
        merge_lora(tiny_denoiser)
    apply_lora(tiny_denoiser, rank=2, scale=4.0)
    with pytest.raises(LoraError, match="already"):
        apply_lora(tiny_denoiser, rank=2, scale=4.0)
