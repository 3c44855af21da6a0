"""Unit tests for Cα-only secondary-structure assignment."""

import numpy as np
import pytest

from libs.structures.generators import generate_motif, ideal_helix, ideal_strand, random_coil
from libs.structures.secondary_structure import assign_secondary_structure


def test_ideal_helix_is_helical() -> None:
    ss = assign_secondary_structure(ideal_helix(20))
    assert ss.alpha >= 0.8
    assert ss.beta == 0.0
    assert set(ss.string) <= {"a", "c"}


def test_ideal_strand_is_extended() -> None:
    ss = assign_secondary_structure(ideal_strand(20))
    assert ss.beta >= 0.8
    assert ss.alpha == 0.0


def test_random_coil_is_mostly_coil(rng: np.random.Generator) -> None:
    ss = assign_secondary_structure(random_coil(60, rng))
    assert ss.coil > 0.5


def test_fractions_sum_to_one(rng: np.random.Generator) -> None:
    for motif in ("alpha_bundle", "beta_meander", "mixed"):
        ss = assign_secondary_structure(generate_motif(motif, 48, 0.05, rng))
        assert ss.alpha + ss.beta + ss.coil == pytest.approx(1.0)
        assert len(ss.labels) == 48


def test_short_chain_rejected() -> None:
    with pytest.raises(ValueError, match="L >= 5"):
        assign_secondary_structure(ideal_helix(4))
