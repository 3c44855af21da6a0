"""Procedural Cα generators: ideal helices and strands, random coils, toy fold classes.

Chains are grown residue by residue from internal coordinates (bond length, bond
angle, dihedral), so consecutive spacing is exactly ``BOND_LENGTH`` before jitter.
"""

from __future__ import annotations

import logging
from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .backbone import Backbone, LabelVocabulary, StructureRecord
from .geometry import bond_angles, dihedral_angles

logger = logging.getLogger(__name__)

BOND_LENGTH = 3.8
HELIX_RISE = 1.5
HELIX_TWIST_DEG = 100.0
STRAND_ANGLE_DEG = 120.0
STRAND_DIHEDRAL_DEG = 180.0
TOY_CONFIDENCE = 100.0

Motif = Literal["alpha_bundle", "beta_meander", "mixed"]


class ToyClassSpec(BaseModel):
    """One procedurally generated fold class."""

    name: str = Field(..., description="Human-readable class name")
    motif: Motif = Field(..., description="Segment layout used by the generator")
    code: str = Field(..., description="CATH-style C.A.T code assigned to the class")
    min_length: int = Field(64, ge=16, description="Shortest generated chain")
    max_length: int = Field(64, ge=16, description="Longest generated chain")
    jitter: float = Field(0.05, ge=0.0, le=0.5, description="Per-coordinate noise std in Å")

    @field_validator("code")
    @classmethod
    def _full_code(cls, value: str) -> str:
        if len([p for p in value.split(".") if p]) != 3:
            raise ValueError(f"Toy class code must have C.A.T depth, got '{value}'")
        return value

    @model_validator(mode="after")
    def _length_range(self) -> "ToyClassSpec":
        if self.min_length > self.max_length:
            raise ValueError("min_length must not exceed max_length")
        return self


def default_toy_classes(length: int = 64, jitter: float = 0.05) -> List[ToyClassSpec]:
    return [
        ToyClassSpec(
            name="alpha_bundle", motif="alpha_bundle", code="1.10.8",
            min_length=length, max_length=length, jitter=jitter,
        ),
        ToyClassSpec(
            name="beta_meander", motif="beta_meander", code="2.30.30",
            min_length=length, max_length=length, jitter=jitter,
        ),
        ToyClassSpec(
            name="mixed", motif="mixed", code="3.30.70",
            min_length=length, max_length=length, jitter=jitter,
        ),
    ]


def ideal_helix(length: int, rise: float = HELIX_RISE, twist_deg: float = HELIX_TWIST_DEG) -> Backbone:
    """Right-handed helix with radius chosen so consecutive spacing is 3.8 Å."""
    twist = np.radians(twist_deg)
    radius = np.sqrt((BOND_LENGTH**2 - rise**2) / (2.0 * (1.0 - np.cos(twist))))
    i = np.arange(length, dtype=np.float64)
    coords = np.stack(
        [radius * np.cos(twist * i), radius * np.sin(twist * i), rise * i], axis=1
    )
    return Backbone(coords)


def ideal_strand(length: int, angle_deg: float = STRAND_ANGLE_DEG) -> Backbone:
    """Planar zig-zag with the given bond angle (dihedral 180°)."""
    half = np.radians(angle_deg) / 2.0
    step = BOND_LENGTH * np.sin(half)
    rise = BOND_LENGTH * np.cos(half)
    i = np.arange(length, dtype=np.float64)
    coords = np.stack([step * i, rise * (i % 2), np.zeros(length)], axis=1)
    return Backbone(coords)


def _internal_helix_geometry() -> Tuple[float, float]:
    reference = ideal_helix(4).coords
    return float(bond_angles(reference)[0]), float(dihedral_angles(reference)[0])


HELIX_ANGLE_DEG, HELIX_DIHEDRAL_DEG = _internal_helix_geometry()


def _place(a: np.ndarray, b: np.ndarray, c: np.ndarray, angle: float, torsion: float) -> np.ndarray:
    """Position the next point from the previous three (natural extension reference frame)."""
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    local = BOND_LENGTH * np.array(
        [-np.cos(angle), np.sin(angle) * np.cos(torsion), np.sin(angle) * np.sin(torsion)]
    )
    return c + local[0] * bc + local[1] * m + local[2] * n


def grow_chain(angles_deg: Sequence[float], dihedrals_deg: Sequence[float]) -> np.ndarray:
    """Chain of ``len(angles) + 2`` points; ``dihedrals`` has one entry fewer than ``angles``."""
    angles = np.radians(np.asarray(angles_deg, dtype=np.float64))
    torsions = np.radians(np.asarray(dihedrals_deg, dtype=np.float64))
    if len(torsions) != len(angles) - 1:
        raise ValueError("grow_chain needs len(dihedrals) == len(angles) - 1")
    n = len(angles) + 2
    coords = np.zeros((n, 3))
    coords[1] = [BOND_LENGTH, 0.0, 0.0]
    coords[2] = coords[1] + BOND_LENGTH * np.array([-np.cos(angles[0]), np.sin(angles[0]), 0.0])
    for j in range(3, n):
        coords[j] = _place(coords[j - 3], coords[j - 2], coords[j - 1], angles[j - 2], torsions[j - 3])
    return coords


def chain_from_segments(segments: str, rng: np.random.Generator) -> np.ndarray:
    """Grow a chain from a per-residue segment string of H (helix), E (strand), L (loop).

    Residue ``j`` takes the bond angle at ``j-1`` and the dihedral ending at ``j``
    from its own segment type.
    """
    n = len(segments)
    if n < 4:
        raise ValueError("Segment string must describe at least 4 residues")
    angles = np.empty(n - 2)
    dihedrals = np.empty(n - 3)
    for j in range(2, n):
        kind = segments[j]
        if kind == "H":
            angle, torsion = HELIX_ANGLE_DEG, HELIX_DIHEDRAL_DEG
        elif kind == "E":
            angle, torsion = STRAND_ANGLE_DEG, STRAND_DIHEDRAL_DEG
        elif kind == "L":
            angle, torsion = rng.uniform(85.0, 125.0), rng.uniform(-150.0, 150.0)
        else:
            raise ValueError(f"Unknown segment type '{kind}'")
        angles[j - 2] = angle
        if j >= 3:
            dihedrals[j - 3] = torsion
    return grow_chain(angles, dihedrals)


# A helix needs 5 consecutive candidates and a strand 4; a segment of n residues
# yields n - 1 candidates.
MIN_SEGMENT = {"H": 6, "E": 5}


def _split_lengths(
    total: int, kinds: Sequence[str], rng: np.random.Generator, spread: int = 2
) -> List[int]:
    sizes = [total // len(kinds)] * len(kinds)
    for i in range(total - sum(sizes)):
        sizes[i] += 1
    for i in range(len(kinds) - 1):
        delta = int(rng.integers(-spread, spread + 1))
        if (
            sizes[i] + delta >= MIN_SEGMENT[kinds[i]]
            and sizes[i + 1] - delta >= MIN_SEGMENT[kinds[i + 1]]
        ):
            sizes[i] += delta
            sizes[i + 1] -= delta
    return sizes


def motif_segments(motif: str, length: int, rng: np.random.Generator) -> str:
    """Per-residue segment layout for a toy motif of exactly ``length`` residues."""
    if motif == "alpha_bundle":
        loop, kinds = 4, ["H", "H", "H"]
    elif motif == "beta_meander":
        loop, kinds = 2, ["E"] * max(3, (length - 2) // 10)
    elif motif == "mixed":
        loop, kinds = 3, ["E", "H", "E", "H"]
    else:
        raise ValueError(f"Unknown motif '{motif}'")
    body = length - 2 - loop * (len(kinds) - 1)
    if body < sum(MIN_SEGMENT[kind] for kind in kinds):
        raise ValueError(f"Length {length} too short for motif '{motif}'")
    if motif == "mixed":
        strand = max(MIN_SEGMENT["E"], body // 6)
        helix = body - 2 * strand
        sizes = [strand, helix // 2, strand, helix - helix // 2]
        if min(sizes[1], sizes[3]) < MIN_SEGMENT["H"]:
            raise ValueError(f"Length {length} too short for motif '{motif}'")
    else:
        sizes = _split_lengths(body, kinds, rng)
    parts = ["L"]
    for i, (kind, size) in enumerate(zip(kinds, sizes)):
        parts.append(kind * size)
        if i < len(kinds) - 1:
            parts.append("L" * loop)
    parts.append("L")
    return "".join(parts)


def generate_motif(motif: str, length: int, jitter: float, rng: np.random.Generator) -> Backbone:
    coords = chain_from_segments(motif_segments(motif, length, rng), rng)
    if jitter > 0:
        coords = coords + rng.normal(0.0, jitter, size=coords.shape)
    return Backbone(coords - coords.mean(axis=0))


def random_coil(
    length: int,
    rng: np.random.Generator,
    min_separation: float = 4.0,
    max_attempts: int = 200,
) -> Backbone:
    """Self-avoiding random walk with 3.8 Å steps in uniformly random directions."""
    coords = np.zeros((length, 3))
    for i in range(1, length):
        for _ in range(max_attempts):
            step = rng.normal(size=3)
            step *= BOND_LENGTH / np.linalg.norm(step)
            candidate = coords[i - 1] + step
            if i < 2 or np.min(np.linalg.norm(coords[: i - 1] - candidate, axis=1)) >= min_separation:
                break
        coords[i] = candidate
    return Backbone(coords)


def toy_vocabulary(class_spec: Sequence[ToyClassSpec]) -> LabelVocabulary:
    return LabelVocabulary.from_codes(spec.code for spec in class_spec)


def generate_toy_dataset(
    n: int, class_spec: Sequence[ToyClassSpec], rng: np.random.Generator
) -> List[StructureRecord]:
    """``n`` labeled records, classes assigned round-robin so they stay balanced."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if len(class_spec) < 2:
        raise ValueError("Toy dataset needs at least two classes")
    names = [spec.name for spec in class_spec]
    if len(set(names)) != len(names):
        raise ValueError("Toy class names must be unique")
    vocabulary = toy_vocabulary(class_spec)

    records: List[StructureRecord] = []
    for i in range(n):
        spec = class_spec[i % len(class_spec)]
        length = int(rng.integers(spec.min_length, spec.max_length + 1))
        backbone = generate_motif(spec.motif, length, spec.jitter, rng)
        records.append(
            StructureRecord(
                backbone=backbone,
                source_id=f"toy-{spec.name}-{i:06d}",
                labels=[vocabulary.encode(spec.code)],
                per_residue_confidence=np.full(length, TOY_CONFIDENCE),
                metadata={"class": spec.name, "motif": spec.motif},
            )
        )
    logger.info("Generated %s toy records over %s classes", n, len(class_spec))
    return records
