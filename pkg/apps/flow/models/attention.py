"""Conditioned, pair-biased multi-head self-attention."""

from __future__ import annotations

import math

import torch
from einops import rearrange
from torch import nn

from apps.flow.errors import NonFiniteError

from .layers import AdaptiveLayerNorm, AdaptiveScale, FeedForward


class PairBiasAttention(nn.Module):
    """Self-attention with QK LayerNorm and a per-head bias projected from the pair grid."""

    def __init__(self, seq_dim: int, pair_dim: int, n_heads: int):
        super().__init__()
        if seq_dim % n_heads:
            raise ValueError(f"seq_dim {seq_dim} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = seq_dim // n_heads
        self.to_q = nn.Linear(seq_dim, seq_dim, bias=False)
        self.to_k = nn.Linear(seq_dim, seq_dim, bias=False)
        self.to_v = nn.Linear(seq_dim, seq_dim, bias=False)
        # normalised over the full width, before the head split
        self.q_norm = nn.LayerNorm(seq_dim)
        self.k_norm = nn.LayerNorm(seq_dim)
        self.pair_norm = nn.LayerNorm(pair_dim)
        self.pair_bias = nn.Linear(pair_dim, n_heads, bias=False)
        self.to_out = nn.Linear(seq_dim, seq_dim)

    def pair_logit_bias(self, pair: torch.Tensor, pair_mask: torch.Tensor) -> torch.Tensor:
        bias = self.pair_bias(self.pair_norm(pair)) * pair_mask.unsqueeze(-1).to(pair.dtype)
        return rearrange(bias, "b i j h -> b h i j")

    def attention_logits(
        self, x: torch.Tensor, pair: torch.Tensor, pair_mask: torch.Tensor
    ) -> torch.Tensor:
        q = rearrange(self.q_norm(self.to_q(x)), "b n (h d) -> b h n d", h=self.n_heads)
        k = rearrange(self.k_norm(self.to_k(x)), "b n (h d) -> b h n d", h=self.n_heads)
        logits = torch.einsum("bhid,bhjd->bhij", q, k) / math.sqrt(self.head_dim)
        return logits + self.pair_logit_bias(pair, pair_mask)

    def forward(self, x: torch.Tensor, pair: torch.Tensor, pair_mask: torch.Tensor) -> torch.Tensor:
        attn = self.attention_logits(x, pair, pair_mask).softmax(dim=-1)
        v = rearrange(self.to_v(x), "b n (h d) -> b h n d", h=self.n_heads)
        out = torch.einsum("bhij,bhjd->bhid", attn, v)
        return self.to_out(rearrange(out, "b h n d -> b n (h d)"))


class AttentionBlock(nn.Module):
    """adaLN -> attention -> gated residual, then adaLN -> SwiGLU FF -> gated residual."""

    def __init__(self, seq_dim: int, pair_dim: int, cond_dim: int, n_heads: int, ff_mult: int = 2):
        super().__init__()
        self.attn_norm = AdaptiveLayerNorm(seq_dim, cond_dim)
        self.attn = PairBiasAttention(seq_dim, pair_dim, n_heads)
        self.attn_scale = AdaptiveScale(cond_dim, seq_dim)
        self.ff_norm = AdaptiveLayerNorm(seq_dim, cond_dim)
        self.ff = FeedForward(seq_dim, ff_mult)
        self.ff_scale = AdaptiveScale(cond_dim, seq_dim)

    def forward(
        self,
        x: torch.Tensor,
        cond: torch.Tensor,
        pair: torch.Tensor,
        pair_mask: torch.Tensor,
    ) -> torch.Tensor:
        x = x + self.attn_scale(self.attn(self.attn_norm(x, cond), pair, pair_mask), cond)
        x = x + self.ff_scale(self.ff(self.ff_norm(x, cond)), cond)
        if not torch.isfinite(x).all():
            raise NonFiniteError("Non-finite activations in attention block")
        return x
