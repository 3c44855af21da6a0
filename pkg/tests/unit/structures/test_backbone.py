"""Unit tests for backbone records, fold labels and the label vocabulary."""

import numpy as np
import pytest

from libs.structures.backbone import (
    Backbone,
    FoldLabel,
    LabelVocabulary,
    Rotation,
    StructureRecord,
)


def test_backbone_rejects_bad_shapes_and_values() -> None:
    with pytest.raises(ValueError, match="must be"):
        Backbone(np.zeros((4, 2)))
    with pytest.raises(ValueError, match="at least 2"):
        Backbone(np.zeros((1, 3)))
    coords = np.zeros((3, 3))
    coords[1, 2] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        Backbone(coords)


def test_backbone_copies_input() -> None:
    raw = np.arange(12, dtype=float).reshape(4, 3)
    backbone = Backbone(raw)
    raw[0, 0] = 99.0
    assert backbone.coords[0, 0] == 0.0
    assert backbone.length == len(backbone) == 4


def test_fold_label_hierarchy() -> None:
    with pytest.raises(ValueError, match="topology"):
        FoldLabel(c=0, a=None, t_topo=1)
    with pytest.raises(ValueError, match="architecture"):
        FoldLabel(c=None, a=1)
    label = FoldLabel(1, 2, 3)
    assert label.depth == 3
    assert label.truncate(1) == FoldLabel(1)
    assert label.truncate(0).is_null
    assert FoldLabel(1).truncate(3) == FoldLabel(1)
    assert label.get("A") == 2
    with pytest.raises(ValueError, match="Unknown label level"):
        label.get("H")


def test_rotation_validation() -> None:
    with pytest.raises(ValueError, match="orthonormal"):
        Rotation(np.eye(3) * 2.0)
    with pytest.raises(ValueError, match="determinant"):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    quarter = Rotation(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
    assert np.allclose(quarter.apply(np.array([[1.0, 0.0, 0.0]])), [[0.0, 1.0, 0.0]])
    assert np.allclose(quarter.inverse().matrix @ quarter.matrix, np.eye(3))


def test_structure_record_confidence_checks() -> None:
    backbone = Backbone(np.zeros((5, 3)) + np.arange(5)[:, None])
    with pytest.raises(ValueError, match="does not match"):
        StructureRecord(backbone, "x", per_residue_confidence=np.full(4, 90.0))
    with pytest.raises(ValueError, match=r"\[0, 100\]"):
        StructureRecord(backbone, "x", per_residue_confidence=np.full(5, 120.0))
    with pytest.raises(ValueError, match="source_id"):
        StructureRecord(backbone, "")
    record = StructureRecord(backbone, "x", labels=[FoldLabel(0), FoldLabel(1)])
    assert record.primary_label == FoldLabel(0)


def test_vocabulary_encode_decode_and_parents() -> None:
    vocab = LabelVocabulary.from_codes(["1.10.8", "2.30.30", "2.40"])
    assert vocab.sizes == (2, 3, 2)
    label = vocab.encode("2.30.30")
    assert vocab.decode(label) == "2.30.30"
    assert vocab.decode(vocab.encode("2")) == "2"
    assert vocab.decode(FoldLabel.null()) == ""
    # H-level suffix is dropped
    assert vocab.encode("1.10.8.20") == vocab.encode("1.10.8")
    with pytest.raises(ValueError, match="Unknown"):
        vocab.encode("3.10")


def test_vocabulary_rejects_orphans_and_mismatched_labels() -> None:
    with pytest.raises(ValueError, match="no parent class"):
        LabelVocabulary(["1"], ["2.30"], [])
    vocab = LabelVocabulary.from_codes(["1.10.8", "2.30.30"])
    with pytest.raises(ValueError, match="outside vocabulary"):
        vocab.validate(FoldLabel(5))
    with pytest.raises(ValueError, match="does not belong"):
        vocab.validate(FoldLabel(c=0, a=1))
    assert LabelVocabulary.from_dict(vocab.to_dict()) == vocab
