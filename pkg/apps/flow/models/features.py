"""Pair features: binned distances of x_t and x̂ plus sequence separation."""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F


def distance_bins(
    coords: torch.Tensor, n_bins: int, d_min: float, d_max: float
) -> torch.Tensor:
    """(..., L, 3) -> (..., L, L) bin ids, same convention as ``libs.structures.geometry.bin_distances``."""
    coords = coords.to(torch.float64)
    diff = coords.unsqueeze(-2) - coords.unsqueeze(-3)
    dist = torch.sqrt((diff * diff).sum(dim=-1))
    if n_bins == 2:
        return (dist >= d_min).long()
    width = (d_max - d_min) / (n_bins - 2)
    idx = 1 + torch.floor((dist - d_min) / width).long()
    idx = torch.where(dist < d_min, torch.zeros_like(idx), idx)
    return idx.clamp(0, n_bins - 1)


def separation_bins(residue_index: torch.Tensor, n_bins: int) -> torch.Tensor:
    """Offsets j − i clipped to ±(n_bins − 1)/2, shifted to start at bin 0."""
    half = (n_bins - 1) // 2
    offset = residue_index.unsqueeze(-2) - residue_index.unsqueeze(-1)
    return offset.clamp(-half, half) + half


def pair_features(
    x_t: torch.Tensor,
    x_hat: Optional[torch.Tensor],
    residue_index: torch.Tensor,
    xt_bins: int,
    xhat_bins: int,
    sep_bins: int,
    d_min: float,
    d_max: float,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """(B, L, L, xt_bins + xhat_bins + sep_bins) one-hot pair features.

    A null ``x_hat`` leaves its block exactly zero.
    """
    b, length, _ = x_t.shape
    blocks = [F.one_hot(distance_bins(x_t, xt_bins, d_min, d_max), xt_bins).to(dtype)]
    if x_hat is None:
        blocks.append(torch.zeros(b, length, length, xhat_bins, dtype=dtype, device=x_t.device))
    else:
        blocks.append(F.one_hot(distance_bins(x_hat, xhat_bins, d_min, d_max), xhat_bins).to(dtype))
    sep = separation_bins(residue_index, sep_bins)
    blocks.append(F.one_hot(sep, sep_bins).to(dtype).expand(b, length, length, sep_bins))
    return torch.cat(blocks, dim=-1)
