"""Shared building blocks: encodings, adaptive norms and SwiGLU feed-forwards."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def sinusoidal_encoding(values: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Map ``values`` (any shape) to ``values.shape + (dim,)`` sin/cos features."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, device=values.device, dtype=values.dtype) / max(half, 1)
    )
    args = values.unsqueeze(-1) * freqs
    encoding = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2:
        encoding = F.pad(encoding, (0, 1))
    return encoding


def time_encoding(t: torch.Tensor, dim: int) -> torch.Tensor:
    # t lives in [0, 1]; stretch it so low frequencies still resolve small steps
    return sinusoidal_encoding(t * 1000.0, dim)


class SwiGLU(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, b = x.chunk(2, dim=-1)
        return F.silu(a) * b


class ConditioningMLP(nn.Module):
    """Linear, SwiGLU, Linear, SwiGLU, Linear."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, 2 * out_dim),
            SwiGLU(),
            nn.Linear(out_dim, 2 * out_dim),
            SwiGLU(),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int = 2):
        super().__init__()
        hidden = dim * mult
        self.net = nn.Sequential(nn.Linear(dim, 2 * hidden), SwiGLU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class AdaptiveLayerNorm(nn.Module):
    """LayerNorm without affine, then scale/shift predicted from the conditioning."""

    def __init__(self, dim: int, cond_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim, elementwise_affine=False)
        self.to_scale = nn.Linear(cond_dim, dim)
        self.to_shift = nn.Linear(cond_dim, dim)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return self.norm(x) * (1.0 + self.to_scale(cond)) + self.to_shift(cond)


class AdaptiveScale(nn.Module):
    """Per-feature gate from the conditioning; zero at init so residual branches start closed."""

    def __init__(self, cond_dim: int, dim: int):
        super().__init__()
        self.to_gate = nn.Linear(cond_dim, dim)
        nn.init.zeros_(self.to_gate.weight)
        nn.init.zeros_(self.to_gate.bias)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return x * self.to_gate(cond)
