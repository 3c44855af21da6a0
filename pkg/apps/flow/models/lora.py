"""Low-rank adapters for every linear and embedding layer of a module tree."""

from __future__ import annotations

import copy
import logging
import math
from typing import List

import torch
import torch.nn.functional as F
from torch import nn

from apps.flow.errors import LoraError

logger = logging.getLogger(__name__)


class LoraLinear(nn.Module):
    """``base(x) + (scale / rank) * x Aᵀ Bᵀ`` with the base layer frozen and B zero-initialised."""

    def __init__(self, base: nn.Linear, rank: int, scale: float):
        super().__init__()
        self.base = base
        self.rank = rank
        self.scaling = scale / rank
        factory = {"dtype": base.weight.dtype, "device": base.weight.device}
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features, **factory))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank, **factory))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a.T @ self.lora_b.T) * self.scaling

    def merged(self) -> nn.Linear:
        layer = copy.deepcopy(self.base)
        with torch.no_grad():
            layer.weight += self.scaling * (self.lora_b @ self.lora_a)
        layer.requires_grad_(True)
        return layer


class LoraEmbedding(nn.Module):
    def __init__(self, base: nn.Embedding, rank: int, scale: float):
        super().__init__()
        self.base = base
        self.rank = rank
        self.scaling = scale / rank
        factory = {"dtype": base.weight.dtype, "device": base.weight.device}
        self.lora_a = nn.Parameter(torch.randn(rank, base.num_embeddings, **factory))
        self.lora_b = nn.Parameter(torch.zeros(base.embedding_dim, rank, **factory))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.base(ids) + (F.embedding(ids, self.lora_a.T) @ self.lora_b.T) * self.scaling

    def merged(self) -> nn.Embedding:
        layer = copy.deepcopy(self.base)
        with torch.no_grad():
            layer.weight += self.scaling * (self.lora_b @ self.lora_a).T
        layer.requires_grad_(True)
        return layer


_ADAPTERS = (LoraLinear, LoraEmbedding)


def has_lora(model: nn.Module) -> bool:
    return any(isinstance(module, _ADAPTERS) for module in model.modules())


def _attach(module: nn.Module, rank: int, scale: float) -> int:
    count = 0
    for name, child in module.named_children():
        if isinstance(child, nn.Linear):
            setattr(module, name, LoraLinear(child, rank, scale))
            count += 1
        elif isinstance(child, nn.Embedding):
            setattr(module, name, LoraEmbedding(child, rank, scale))
            count += 1
        else:
            count += _attach(child, rank, scale)
    return count


def apply_lora(model: nn.Module, rank: int = 16, scale: float = 32.0) -> nn.Module:
    """Freeze ``model`` and wrap its linear/embedding layers in place; returns ``model``."""
    if has_lora(model):
        raise LoraError("Model already carries LoRA adapters")
    model.requires_grad_(False)
    count = _attach(model, rank, scale)
    logger.info("Attached LoRA adapters (rank=%s, scale=%s) to %s layers", rank, scale, count)
    return model


def _merge(module: nn.Module) -> None:
    for name, child in module.named_children():
        if isinstance(child, _ADAPTERS):
            setattr(module, name, child.merged())
        else:
            _merge(child)


def merge_lora(model: nn.Module) -> nn.Module:
    """Plain copy of ``model`` with every adapter folded into its base weights."""
    if not has_lora(model):
        raise LoraError("Model has no LoRA adapters to merge")
    merged = copy.deepcopy(model)
    _merge(merged)
    merged.requires_grad_(True)
    return merged


def lora_parameters(model: nn.Module) -> List[nn.Parameter]:
    params: List[nn.Parameter] = []
    for module in model.modules():
        if isinstance(module, _ADAPTERS):
            params.extend([module.lora_a, module.lora_b])
    return params
