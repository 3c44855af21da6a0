"""Pair-track update: token outer sums plus triangle multiplicative updates."""

from __future__ import annotations

import torch
from torch import nn


class TriangleMultiplication(nn.Module):
    """Gated triangle multiplicative update over a batch of pair grids.

    Outgoing: m[i, j] = sum_k a[i, k] * b[j, k]
    Incoming: m[i, j] = sum_k a[k, i] * b[k, j]
    """

    def __init__(self, pair_dim: int, hidden_dim: int, outgoing: bool = True):
        super().__init__()
        self.equation = "bikc,bjkc->bijc" if outgoing else "bkic,bkjc->bijc"
        self.ln_in = nn.LayerNorm(pair_dim)
        self.ln_out = nn.LayerNorm(hidden_dim)
        self.proj_a = nn.Linear(pair_dim, hidden_dim, bias=False)
        self.gate_a = nn.Linear(pair_dim, hidden_dim, bias=False)
        self.proj_b = nn.Linear(pair_dim, hidden_dim, bias=False)
        self.gate_b = nn.Linear(pair_dim, hidden_dim, bias=False)
        self.gate_out = nn.Linear(pair_dim, pair_dim, bias=False)
        self.proj_out = nn.Linear(hidden_dim, pair_dim, bias=False)
        nn.init.zeros_(self.proj_out.weight)

    def forward(self, z: torch.Tensor, pair_mask: torch.Tensor) -> torch.Tensor:
        """Return the update dz for z of shape (B, N, N, pair_dim)."""
        mask = pair_mask.unsqueeze(-1).to(z.dtype)
        z_ln = self.ln_in(z)
        a = torch.sigmoid(self.gate_a(z_ln)) * self.proj_a(z_ln) * mask
        b = torch.sigmoid(self.gate_b(z_ln)) * self.proj_b(z_ln) * mask
        m = torch.einsum(self.equation, a, b)
        dz = torch.sigmoid(self.gate_out(z_ln)) * self.proj_out(self.ln_out(m))
        return dz * mask


class PairUpdate(nn.Module):
    def __init__(self, seq_dim: int, pair_dim: int, hidden_dim: int):
        super().__init__()
        self.seq_norm = nn.LayerNorm(seq_dim)
        self.to_left = nn.Linear(seq_dim, pair_dim)
        self.to_right = nn.Linear(seq_dim, pair_dim)
        for linear in (self.to_left, self.to_right):
            nn.init.zeros_(linear.weight)
            nn.init.zeros_(linear.bias)
        self.tri_out = TriangleMultiplication(pair_dim, hidden_dim, outgoing=True)
        self.tri_in = TriangleMultiplication(pair_dim, hidden_dim, outgoing=False)

    def forward(self, x: torch.Tensor, pair: torch.Tensor, pair_mask: torch.Tensor) -> torch.Tensor:
        mask = pair_mask.unsqueeze(-1).to(pair.dtype)
        h = self.seq_norm(x)
        pair = pair + (self.to_left(h).unsqueeze(2) + self.to_right(h).unsqueeze(1)) * mask
        pair = pair + self.tri_out(pair, pair_mask)
        pair = pair + self.tri_in(pair, pair_mask)
        return pair * mask
