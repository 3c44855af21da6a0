"""Unit tests for pair-biased attention."""

import math

import pytest
import torch

from apps.flow.errors import NonFiniteError
from apps.flow.models.attention import AttentionBlock, PairBiasAttention


def test_attention_logits_bounded_by_qk_norm() -> None:
    attn = PairBiasAttention(seq_dim=32, pair_dim=8, n_heads=4)
    x = 50.0 * torch.randn(2, 11, 32)
    pair = torch.randn(2, 11, 11, 8)
    mask = torch.ones(2, 11, 11)
    logits = attn.attention_logits(x, pair, mask)
    qk = logits - attn.pair_logit_bias(pair, mask)
    assert logits.shape == (2, 4, 11, 11)
    assert qk.abs().max() <= 32 / math.sqrt(8) + 1e-4


def test_pair_bias_is_masked() -> None:
    attn = PairBiasAttention(seq_dim=16, pair_dim=8, n_heads=2)
    pair = torch.randn(1, 5, 5, 8)
    mask = torch.zeros(1, 5, 5)
    mask[:, 2:, 2:] = 1.0
    bias = attn.pair_logit_bias(pair, mask)
    assert torch.count_nonzero(bias[:, :, :2, :]) == 0
    assert torch.count_nonzero(bias[:, :, :, :2]) == 0


def test_block_is_identity_at_init() -> None:
    block = AttentionBlock(seq_dim=16, pair_dim=8, cond_dim=12, n_heads=2)
    x = torch.randn(2, 7, 16)
    out = block(x, torch.randn(2, 7, 12), torch.randn(2, 7, 7, 8), torch.ones(2, 7, 7))
    assert torch.equal(out, x)


def test_block_rejects_non_finite_activations() -> None:
    block = AttentionBlock(seq_dim=16, pair_dim=8, cond_dim=12, n_heads=2)
    x = torch.randn(1, 4, 16)
    x[0, 1, 3] = float("nan")
    with pytest.raises(NonFiniteError):
        block(x, torch.randn(1, 4, 12), torch.randn(1, 4, 4, 8), torch.ones(1, 4, 4))


def test_head_split_must_divide() -> None:
    with pytest.raises(ValueError, match="divisible"):
        PairBiasAttention(seq_dim=10, pair_dim=4, n_heads=4)


def test_block_commutes_with_residue_permutation() -> None:
    block = AttentionBlock(seq_dim=16, pair_dim=8, cond_dim=12, n_heads=2).double()
    with torch.no_grad():
        for param in block.parameters():
            if not param.any():
                param.copy_(0.1 * torch.randn_like(param))
    x = torch.randn(2, 9, 16, dtype=torch.float64)
    cond = torch.randn(2, 9, 12, dtype=torch.float64)
    pair = torch.randn(2, 9, 9, 8, dtype=torch.float64)
    mask = torch.ones(2, 9, 9, dtype=torch.float64)
    mask[:, 7:, :] = 0.0
    mask[:, :, 7:] = 0.0
    perm = torch.randperm(9)

    out = block(x, cond, pair, mask)
    permuted = block(x[:, perm], cond[:, perm], pair[:, perm][:, :, perm], mask[:, perm][:, :, perm])
    assert not torch.allclose(out, x)
    assert torch.allclose(permuted, out[:, perm], atol=1e-10)
