"""
Backbone records
Cα coordinate chains, hierarchical fold labels and their vocabulary
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LEVELS = ("C", "A", "T")
_LEVEL_ATTR = {"C": "c", "A": "a", "T": "t_topo"}


def as_coords(value: "Backbone | np.ndarray") -> np.ndarray:
    """Return an (L, 3) float64 view of a Backbone or raw coordinate array."""
    if isinstance(value, Backbone):
        return value.coords
    coords = np.asarray(value, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"Expected an (L, 3) coordinate array, got {coords.shape}")
    return coords


@dataclass
class Backbone:
    """Cα trace in Å, one row per residue."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"Backbone coords must be (L, 3), got {coords.shape}")
        if coords.shape[0] < 2:
            raise ValueError(f"Backbone needs at least 2 residues, got {coords.shape[0]}")
        if not np.isfinite(coords).all():
            raise ValueError("Backbone coords contain non-finite values")
        self.coords = coords

    @property
    def length(self) -> int:
        return int(self.coords.shape[0])

    def __len__(self) -> int:
        return self.length

    def copy(self) -> "Backbone":
        return Backbone(self.coords.copy())


@dataclass(frozen=True)
class FoldLabel:
    """C/A/T label; ``None`` at a level means the null label for that level."""

    c: Optional[int] = None
    a: Optional[int] = None
    t_topo: Optional[int] = None

    def __post_init__(self):
        if self.t_topo is not None and self.a is None:
            raise ValueError("FoldLabel with a topology id needs an architecture id")
        if self.a is not None and self.c is None:
            raise ValueError("FoldLabel with an architecture id needs a class id")
        for name in ("c", "a", "t_topo"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"FoldLabel.{name} must be non-negative, got {value}")

    @classmethod
    def null(cls) -> "FoldLabel":
        return cls()

    @property
    def depth(self) -> int:
        """Number of specified levels (0 = fully null, 3 = CAT)."""
        if self.t_topo is not None:
            return 3
        if self.a is not None:
            return 2
        if self.c is not None:
            return 1
        return 0

    @property
    def is_null(self) -> bool:
        return self.depth == 0

    def get(self, level: str) -> Optional[int]:
        try:
            return getattr(self, _LEVEL_ATTR[level])
        except KeyError as exc:
            raise ValueError(f"Unknown label level '{level}', expected one of {LEVELS}") from exc

    def truncate(self, depth: int) -> "FoldLabel":
        """Keep only the first ``depth`` levels."""
        depth = max(0, min(depth, self.depth))
        return FoldLabel(
            c=self.c if depth >= 1 else None,
            a=self.a if depth >= 2 else None,
            t_topo=self.t_topo if depth >= 3 else None,
        )

    def as_tuple(self) -> tuple[Optional[int], Optional[int], Optional[int]]:
        return (self.c, self.a, self.t_topo)

    def to_dict(self) -> Dict[str, Optional[int]]:
        return {"c": self.c, "a": self.a, "t_topo": self.t_topo}


@dataclass(frozen=True)
class Rotation:
    """Proper rotation acting on row-vector coordinates as ``coords @ matrix.T``."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.shape != (3, 3):
            raise ValueError(f"Rotation matrix must be 3x3, got {matrix.shape}")
        if not np.allclose(matrix.T @ matrix, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("Rotation matrix is not orthonormal")
        if abs(np.linalg.det(matrix) - 1.0) > 1e-9:
            raise ValueError("Rotation matrix must have determinant +1")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    def apply(self, coords: "Backbone | np.ndarray") -> np.ndarray:
        return as_coords(coords) @ self.matrix.T

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)


@dataclass
class StructureRecord:
    """One training/evaluation structure with its (possibly multiple) labels."""

    backbone: Backbone
    source_id: str
    labels: List[FoldLabel] = field(default_factory=list)
    per_residue_confidence: Optional[np.ndarray] = None
    flags: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.source_id:
            raise ValueError("StructureRecord.source_id must be non-empty")
        if self.per_residue_confidence is not None:
            conf = np.array(self.per_residue_confidence, dtype=np.float64)
            if conf.shape != (self.backbone.length,):
                raise ValueError(
                    f"Confidence length {conf.shape} does not match backbone length "
                    f"{self.backbone.length}"
                )
            if not np.isfinite(conf).all() or conf.min() < 0.0 or conf.max() > 100.0:
                raise ValueError("Per-residue confidence must lie in [0, 100]")
            self.per_residue_confidence = conf

    @property
    def length(self) -> int:
        return self.backbone.length

    @property
    def primary_label(self) -> Optional[FoldLabel]:
        return self.labels[0] if self.labels else None


class LabelVocabulary:
    """Per-level code tables mapping CATH-style codes ("1", "1.10", "1.10.8") to ids.

    Ids run 0..K-1 per level; models reserve index K as the level's null entry.
    """

    def __init__(
        self,
        c_codes: Sequence[str] = (),
        a_codes: Sequence[str] = (),
        t_codes: Sequence[str] = (),
    ):
        self.codes: Dict[str, List[str]] = {
            "C": list(c_codes),
            "A": list(a_codes),
            "T": list(t_codes),
        }
        self._index: Dict[str, Dict[str, int]] = {}
        for level, codes in self.codes.items():
            if len(set(codes)) != len(codes):
                raise ValueError(f"Duplicate codes in level {level}")
            self._index[level] = {code: i for i, code in enumerate(codes)}
        for code in self.codes["A"]:
            if _prefix(code, 1) not in self._index["C"]:
                raise ValueError(f"Architecture '{code}' has no parent class in vocabulary")
        for code in self.codes["T"]:
            if _prefix(code, 2) not in self._index["A"]:
                raise ValueError(f"Topology '{code}' has no parent architecture in vocabulary")

    @classmethod
    def from_codes(cls, codes: Iterable[str]) -> "LabelVocabulary":
        """Build sorted tables from full or partial codes, adding parent prefixes."""
        c_set, a_set, t_set = set(), set(), set()
        for code in codes:
            parts = _split(code)
            c_set.add(parts[0])
            if len(parts) >= 2:
                a_set.add(".".join(parts[:2]))
            if len(parts) >= 3:
                t_set.add(".".join(parts[:3]))
        return cls(sorted(c_set), sorted(a_set), sorted(t_set))

    def size(self, level: str) -> int:
        return len(self.codes[level])

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.size("C"), self.size("A"), self.size("T"))

    def encode(self, code: str) -> FoldLabel:
        """Encode a code of depth 1-3; deeper (H-level) suffixes are dropped."""
        parts = _split(code)[:3]
        ids: List[int] = []
        for depth, level in enumerate(LEVELS[: len(parts)], start=1):
            key = ".".join(parts[:depth])
            if key not in self._index[level]:
                raise ValueError(f"Unknown {level}-level code '{key}'")
            ids.append(self._index[level][key])
        ids += [None] * (3 - len(ids))  # type: ignore[list-item]
        return FoldLabel(*ids)

    def decode(self, label: FoldLabel) -> str:
        """Return the most specific code for ``label`` ("" for the null label)."""
        self.validate(label)
        if label.t_topo is not None:
            return self.codes["T"][label.t_topo]
        if label.a is not None:
            return self.codes["A"][label.a]
        if label.c is not None:
            return self.codes["C"][label.c]
        return ""

    def validate(self, label: FoldLabel) -> None:
        for level in LEVELS:
            value = label.get(level)
            if value is not None and value >= self.size(level):
                raise ValueError(
                    f"{level}-level id {value} outside vocabulary of size {self.size(level)}"
                )
        if label.a is not None and _prefix(self.codes["A"][label.a], 1) != self.codes["C"][label.c]:
            raise ValueError("FoldLabel architecture does not belong to its class")
        if (
            label.t_topo is not None
            and _prefix(self.codes["T"][label.t_topo], 2) != self.codes["A"][label.a]
        ):
            raise ValueError("FoldLabel topology does not belong to its architecture")

    def to_dict(self) -> Dict[str, List[str]]:
        return {level: list(codes) for level, codes in self.codes.items()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[str]]) -> "LabelVocabulary":
        return cls(data.get("C", []), data.get("A", []), data.get("T", []))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelVocabulary) and self.codes == other.codes

    def __repr__(self) -> str:
        return f"LabelVocabulary(sizes={self.sizes})"


def _split(code: str) -> List[str]:
    parts = [p for p in str(code).strip().split(".") if p]
    if not parts:
        raise ValueError(f"Empty fold code '{code}'")
    return parts


def _prefix(code: str, depth: int) -> str:
    return ".".join(_split(code)[:depth])
