"""
Pytest configuration and shared fixtures for FlowFold tests.
"""
from pathlib import Path
from typing import List

import numpy as np
import pytest
import torch

from apps.flow.models.denoiser import Denoiser
from apps.flow.schemas.model import ClassifierConfig, ModelConfig
from libs.structures.backbone import LabelVocabulary, StructureRecord
from libs.structures.generators import (
    ToyClassSpec,
    default_toy_classes,
    generate_toy_dataset,
    toy_vocabulary,
)

TOY_LENGTH = 40


# ========================================
# Randomness
# ========================================

@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh seeded generator per test."""
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def seed_torch() -> None:
    torch.manual_seed(0)


# ========================================
# Toy Data Fixtures
# ========================================

@pytest.fixture(scope="session")
def toy_classes() -> List[ToyClassSpec]:
    return default_toy_classes(length=TOY_LENGTH, jitter=0.05)


@pytest.fixture(scope="session")
def toy_vocab(toy_classes: List[ToyClassSpec]) -> LabelVocabulary:
    return toy_vocabulary(toy_classes)


@pytest.fixture(scope="session")
def toy_records(toy_classes: List[ToyClassSpec]) -> List[StructureRecord]:
    """30 labelled length-40 structures, ten per class."""
    return generate_toy_dataset(30, toy_classes, np.random.default_rng(7))


@pytest.fixture
def random_backbone(rng: np.random.Generator) -> np.ndarray:
    """Compact random chain, (20, 3) Å."""
    return np.cumsum(rng.normal(scale=2.2, size=(20, 3)), axis=0)


# ========================================
# Model Fixtures
# ========================================

@pytest.fixture
def tiny_model_config(toy_vocab: LabelVocabulary) -> ModelConfig:
    n_c, n_a, n_t = toy_vocab.sizes
    return ModelConfig(
        seq_dim=32,
        pair_dim=16,
        cond_dim=32,
        n_heads=4,
        n_blocks=2,
        n_registers=4,
        n_pair_updates=1,
        t_enc_dim=16,
        idx_enc_dim=16,
        fold_emb_dim=8,
        tri_hidden_dim=8,
        xt_bins=16,
        xhat_bins=16,
        sep_bins=31,
        distogram_bins=16,
        n_c_classes=n_c,
        n_a_classes=n_a,
        n_t_classes=n_t,
    )


@pytest.fixture
def tiny_denoiser(tiny_model_config: ModelConfig) -> Denoiser:
    torch.manual_seed(0)
    return Denoiser(tiny_model_config)


@pytest.fixture
def tiny_classifier_config(toy_vocab: LabelVocabulary) -> ClassifierConfig:
    n_c, n_a, n_t = toy_vocab.sizes
    return ClassifierConfig(
        hidden_dim=16,
        n_layers=2,
        dropout=0.0,
        n_rbf=8,
        idx_enc_dim=8,
        epochs=3,
        batch_size=8,
        n_c_classes=n_c,
        n_a_classes=n_a,
        n_t_classes=n_t,
    )


# ========================================
# File System Fixtures
# ========================================

@pytest.fixture
def run_dir(tmp_path: Path) -> Path:
    out = tmp_path / "run"
    out.mkdir(parents=True, exist_ok=True)
    return out


# ========================================
# Pytest Hooks
# ========================================

def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "unit: mark test as unit test (fast, isolated)"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as integration test (multi-module runs)"
    )
    config.addinivalue_line(
        "markers", "e2e: mark test as end-to-end test (full CLI pipeline)"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow (>1s execution)"
    )
    config.addinivalue_line(
        "markers", "acceptance: mark test as a desk-scale acceptance run (minutes)"
    )


@pytest.hookimpl(tryfirst=True)
def pytest_collection_modifyitems(config, items):
    """Automatically mark tests based on location."""
    for item in items:
        path = str(item.fspath)
        if f"{Path('tests', 'unit')}" in path:
            item.add_marker(pytest.mark.unit)
        elif f"{Path('tests', 'integration')}" in path:
            item.add_marker(pytest.mark.integration)
            item.add_marker(pytest.mark.slow)
        elif f"{Path('tests', 'e2e')}" in path:
            item.add_marker(pytest.mark.e2e)
            item.add_marker(pytest.mark.slow)
        elif f"{Path('tests', 'acceptance')}" in path:
            item.add_marker(pytest.mark.acceptance)
            item.add_marker(pytest.mark.slow)
