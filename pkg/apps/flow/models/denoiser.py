"""
Conditioned, pair-biased transformer predicting the flow velocity of Cα chains.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import torch
from torch import nn

from apps.flow.errors import NonFiniteError
from apps.flow.schemas.model import ModelConfig
from libs.structures.backbone import FoldLabel

from .attention import AttentionBlock
from .features import pair_features
from .layers import ConditioningMLP, sinusoidal_encoding, time_encoding
from .pair_update import PairUpdate

logger = logging.getLogger(__name__)

# x_t, x̂, motif coordinates (3 each) and the motif mask flag
_COORD_FEATURES = 10


@dataclass
class SequenceState:
    tokens: torch.Tensor  # (B, R + L, seq_dim), registers first
    conditioning: torch.Tensor  # (B, R + L, cond_dim), zero at registers


@dataclass
class PairState:
    grid: torch.Tensor  # (B, R + L, R + L, pair_dim), zero on register rows/columns
    mask: torch.Tensor  # (B, R + L, R + L), 1 on the residue block


class DenoiserOutput(NamedTuple):
    velocity: torch.Tensor  # (B, L, 3), Å per unit time
    distogram_logits: Optional[torch.Tensor]  # (B, L, L, distogram_bins)


def pair_update_positions(n_blocks: int, n_updates: int) -> set[int]:
    """Block indices after which a pair update runs, spread evenly over the trunk."""
    return {(k + 1) * n_blocks // n_updates - 1 for k in range(n_updates)}


class Denoiser(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.fold_embeddings = nn.ModuleList(
            nn.Embedding(size + 1, c.fold_emb_dim) for size in c.vocab_sizes
        )
        self.cond_mlp = ConditioningMLP(c.t_enc_dim + 3 * c.fold_emb_dim, c.cond_dim)
        self.seq_in = nn.Linear(_COORD_FEATURES + c.idx_enc_dim, c.seq_dim)
        self.registers = nn.Parameter(torch.randn(c.n_registers, c.seq_dim) * 0.02)
        self.pair_in = nn.Linear(c.xt_bins + c.xhat_bins + c.sep_bins, c.pair_dim)
        self.blocks = nn.ModuleList(
            AttentionBlock(c.seq_dim, c.pair_dim, c.cond_dim, c.n_heads, c.ff_mult)
            for _ in range(c.n_blocks)
        )
        self.pair_updates = nn.ModuleList(
            PairUpdate(c.seq_dim, c.pair_dim, c.tri_hidden_dim) for _ in range(c.n_pair_updates)
        )
        self._update_after = sorted(pair_update_positions(c.n_blocks, c.n_pair_updates)) if c.n_pair_updates else []
        self.velocity_head = nn.Sequential(nn.LayerNorm(c.seq_dim), nn.Linear(c.seq_dim, 3))
        nn.init.zeros_(self.velocity_head[1].weight)
        nn.init.zeros_(self.velocity_head[1].bias)
        self.distogram_head = (
            nn.Sequential(nn.LayerNorm(c.pair_dim), nn.Linear(c.pair_dim, c.distogram_bins))
            if c.use_distogram_head
            else None
        )

    # ------------------------------------------------------------------
    # Inputs
    # ------------------------------------------------------------------

    def label_tensor(self, labels: Sequence[Optional[FoldLabel]]) -> torch.Tensor:
        """(B, 3) long ids; a missing level maps to that level's null id (the vocabulary size)."""
        rows = []
        for label in labels:
            label = label or FoldLabel.null()
            rows.append(
                [size if value is None else value for value, size in zip(label.as_tuple(), self.config.vocab_sizes)]
            )
        return torch.tensor(rows, dtype=torch.long, device=self.registers.device)

    def embed_fold_labels(self, label_ids: torch.Tensor) -> torch.Tensor:
        """Concatenate the C, A and T embeddings of (B, 3) label ids."""
        for level, (size, column) in enumerate(zip(self.config.vocab_sizes, label_ids.unbind(-1))):
            if (column < 0).any() or (column > size).any():
                raise ValueError(
                    f"Label id out of range at level {'CAT'[level]}: vocabulary has {size} classes"
                )
        return torch.cat(
            [embed(ids) for embed, ids in zip(self.fold_embeddings, label_ids.unbind(-1))], dim=-1
        )

    def build_inputs(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        x_hat: Optional[torch.Tensor] = None,
        label_ids: Optional[torch.Tensor] = None,
        motif_coords: Optional[torch.Tensor] = None,
        motif_mask: Optional[torch.Tensor] = None,
        residue_index: Optional[torch.Tensor] = None,
    ) -> tuple[SequenceState, PairState]:
        c = self.config
        b, length, _ = x_t.shape
        dtype, device = self.registers.dtype, self.registers.device
        x_t = x_t.to(dtype)
        if residue_index is None:
            residue_index = torch.arange(length, device=device).expand(b, length)
        if label_ids is None:
            label_ids = self.label_tensor([None] * b)
        if t.shape != (b,):
            raise ValueError(f"t must have shape ({b},), got {tuple(t.shape)}")

        zeros = torch.zeros_like(x_t)
        hat = zeros if x_hat is None else x_hat.to(dtype)
        if motif_coords is None or motif_mask is None:
            motif, mask = zeros, torch.zeros(b, length, 1, dtype=dtype, device=device)
        else:
            mask = motif_mask.to(dtype).reshape(b, length, 1)
            # motif centred on its own centre of mass
            com = (motif_coords.to(dtype) * mask).sum(1, keepdim=True) / mask.sum(1, keepdim=True).clamp(min=1.0)
            motif = (motif_coords.to(dtype) - com) * mask
        coord_features = torch.cat([x_t, hat, motif], dim=-1) * c.coord_scale
        idx_enc = sinusoidal_encoding(residue_index.to(dtype), c.idx_enc_dim)
        residues = self.seq_in(torch.cat([coord_features, mask, idx_enc], dim=-1))
        tokens = torch.cat([self.registers.expand(b, -1, -1), residues], dim=1)

        cond_vec = self.cond_mlp(
            torch.cat([time_encoding(t.to(dtype), c.t_enc_dim), self.embed_fold_labels(label_ids)], dim=-1)
        )
        cond = torch.cat(
            [
                torch.zeros(b, c.n_registers, c.cond_dim, dtype=dtype, device=device),
                cond_vec.unsqueeze(1).expand(b, length, c.cond_dim),
            ],
            dim=1,
        )

        feats = pair_features(
            x_t, x_hat, residue_index, c.xt_bins, c.xhat_bins, c.sep_bins,
            c.pair_d_min, c.pair_d_max, dtype=dtype,
        )
        r = c.n_registers
        n = r + length
        grid = torch.zeros(b, n, n, c.pair_dim, dtype=dtype, device=device)
        grid[:, r:, r:] = self.pair_in(feats)
        pair_mask = torch.zeros(b, n, n, dtype=dtype, device=device)
        pair_mask[:, r:, r:] = 1.0
        return SequenceState(tokens, cond), PairState(grid, pair_mask)

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        x_hat: Optional[torch.Tensor] = None,
        label_ids: Optional[torch.Tensor] = None,
        motif_coords: Optional[torch.Tensor] = None,
        motif_mask: Optional[torch.Tensor] = None,
        residue_index: Optional[torch.Tensor] = None,
    ) -> DenoiserOutput:
        seq, pair = self.build_inputs(x_t, t, x_hat, label_ids, motif_coords, motif_mask, residue_index)
        tokens, grid = seq.tokens, pair.grid
        updates = iter(self.pair_updates)
        for index, block in enumerate(self.blocks):
            tokens = block(tokens, seq.conditioning, grid, pair.mask)
            if index in self._update_after:
                grid = next(updates)(tokens, grid, pair.mask)

        r = self.config.n_registers
        velocity = self.velocity_head(tokens[:, r:]) / self.config.coord_scale
        logits = None
        if self.distogram_head is not None:
            raw = self.distogram_head(grid[:, r:, r:])
            logits = 0.5 * (raw + raw.transpose(1, 2))
        if not torch.isfinite(velocity).all() or (logits is not None and not torch.isfinite(logits).all()):
            raise NonFiniteError("Non-finite denoiser output")
        return DenoiserOutput(velocity, logits)


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count of ``Denoiser(config)``."""
    c = config
    seq, pair, cond = c.seq_dim, c.pair_dim, c.cond_dim

    def linear(n_in: int, n_out: int, bias: bool = True) -> int:
        return n_in * n_out + (n_out if bias else 0)

    count = sum(size + 1 for size in c.vocab_sizes) * c.fold_emb_dim
    mlp_in = c.t_enc_dim + 3 * c.fold_emb_dim
    count += linear(mlp_in, 2 * cond) + linear(cond, 2 * cond) + linear(cond, cond)
    count += linear(_COORD_FEATURES + c.idx_enc_dim, seq)
    count += c.n_registers * seq
    count += linear(c.xt_bins + c.xhat_bins + c.sep_bins, pair)

    hidden = c.ff_mult * seq
    block = 4 * linear(cond, seq)  # two adaptive norms (scale + shift)
    block += 2 * linear(cond, seq)  # two adaptive gates
    block += 3 * linear(seq, seq, bias=False) + 2 * 2 * seq + 2 * pair + linear(pair, c.n_heads, bias=False)
    block += linear(seq, seq)
    block += linear(seq, 2 * hidden) + linear(hidden, seq)
    count += c.n_blocks * block

    h = c.tri_hidden_dim
    tri = 2 * pair + 2 * h + 4 * linear(pair, h, bias=False) + linear(pair, pair, bias=False) + linear(h, pair, bias=False)
    update = 2 * seq + 2 * linear(seq, pair) + 2 * tri
    count += c.n_pair_updates * update

    count += 2 * seq + linear(seq, 3)
    if c.use_distogram_head:
        count += 2 * pair + linear(pair, c.distogram_bins)
    return count
