"""Acceptance: a denoiser trained on Gaussian point clouds learns the exact Gaussian velocity."""

from pathlib import Path

import numpy as np
import pytest
import torch

from apps.flow.models.denoiser import Denoiser
from apps.flow.schemas.model import ModelConfig
from apps.flow.schemas.training import ObjectiveConfig, TimeSampler
from apps.flow.services.objective import interpolate
from apps.flow.services.sampler import DenoiserField
from apps.flow.workers.trainer import train_denoiser
from libs.structures.backbone import Backbone, LabelVocabulary, StructureRecord
from libs.structures.clustering import build_manifest

SCALE = 5.0
LENGTH = 32


def gaussian_velocity(x_t: np.ndarray, t: float, scale: float = SCALE) -> np.ndarray:
    """E[x1 − ε | x_t] for centred N(0, scale²) clouds and N(0, 1) noise.

    Centring leaves the centroid of x_t as pure noise, so it gets its own coefficient.
    """
    centroid = x_t.mean(axis=-2, keepdims=True)
    slope = (t * scale**2 - (1.0 - t)) / (t**2 * scale**2 + (1.0 - t) ** 2)
    return slope * (x_t - centroid) - centroid / (1.0 - t)


def _clouds(n: int, rng: np.random.Generator) -> list[StructureRecord]:
    return [
        StructureRecord(backbone=Backbone(SCALE * rng.standard_normal((LENGTH, 3))), source_id=f"cloud-{i:05d}")
        for i in range(n)
    ]


@pytest.fixture(scope="module")
def gaussian_model(tmp_path_factory) -> Denoiser:
    torch.manual_seed(0)
    vocabulary = LabelVocabulary.from_codes(["1.10.8"])
    n_c, n_a, n_t = vocabulary.sizes
    model = Denoiser(ModelConfig(
        seq_dim=64, pair_dim=32, cond_dim=64, n_heads=4, n_blocks=4, n_registers=4, n_pair_updates=1,
        t_enc_dim=32, idx_enc_dim=32, fold_emb_dim=8, tri_hidden_dim=16, xt_bins=32, xhat_bins=32,
        sep_bins=63, distogram_bins=32, use_distogram_head=False,
        n_c_classes=n_c, n_a_classes=n_a, n_t_classes=n_t,
    ))
    records = _clouds(4000, np.random.default_rng(0))
    # one cluster, so records are drawn uniformly
    manifest = build_manifest(records, vocabulary, dataset_id="gaussian", rg_bucket_width=1e6)
    config = ObjectiveConfig(
        time_sampler=TimeSampler(kind="uniform"), self_conditioning_prob=0.0, learning_rate=1e-3,
        batch_size=16, n_steps=4000, log_every=500, checkpoint_every=10_000,
    )
    train_denoiser(model, records, manifest, config, tmp_path_factory.mktemp("gaussian"), seed=0, progress=False)
    return model


def test_gaussian_velocity_matches_regression_target() -> None:
    # Monte Carlo regression of x1 − ε on x_t recovers the closed form
    rng = np.random.default_rng(1)
    t = 0.35
    x1 = SCALE * rng.standard_normal((20_000, LENGTH, 3))
    x1 -= x1.mean(axis=1, keepdims=True)
    eps = rng.standard_normal(x1.shape)
    x_t = interpolate(x1, eps, t)
    exact = gaussian_velocity(x_t, t)
    residual = (x1 - eps) - exact
    # the residual is uncorrelated with the input
    assert abs(np.mean(residual * x_t)) < 0.05


def test_learned_field_matches_gaussian_velocity(gaussian_model: Denoiser) -> None:
    field = DenoiserField(gaussian_model)
    rng = np.random.default_rng(2)
    errors = []
    for t in np.linspace(0.1, 0.9, 9):
        x1 = SCALE * rng.standard_normal((64, LENGTH, 3))
        x1 -= x1.mean(axis=1, keepdims=True)
        x_t = interpolate(x1, rng.standard_normal(x1.shape), t)
        exact = gaussian_velocity(x_t, t)
        learned = field(x_t, float(t), None, None)
        errors.append(np.sqrt(np.mean((learned - exact) ** 2) / np.mean(exact**2)))
    assert np.mean(errors) < 0.1
