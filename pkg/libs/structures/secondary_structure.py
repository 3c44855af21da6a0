"""P-SEA secondary-structure assignment from Cα geometry alone.

Each residue ``i`` is described by distances from ``i-1`` to ``i+1``, ``i+2`` and
``i+3``, the bond angle at ``i`` and the dihedral over ``i-1..i+2``. Residues whose
window cannot be formed near the chain ends never satisfy a criterion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .backbone import Backbone, as_coords
from .geometry import bond_angles, dihedral_angles

HELIX, STRAND, COIL = "a", "b", "c"

# (low, high) windows
HELIX_ANGLE = (89.0 - 12.0, 89.0 + 12.0)
HELIX_DIHEDRAL = (50.0 - 20.0, 50.0 + 20.0)
HELIX_D2 = (5.5 - 0.5, 5.5 + 0.5)
HELIX_D3 = (5.3 - 0.5, 5.3 + 0.5)
HELIX_D4 = (6.4 - 0.6, 6.4 + 0.6)

STRAND_ANGLE = (124.0 - 14.0, 124.0 + 14.0)
STRAND_DIHEDRAL = ((-180.0, -125.0), (145.0, 180.0))
STRAND_D2 = (6.7 - 0.6, 6.7 + 0.6)
STRAND_D3 = (9.9 - 0.9, 9.9 + 0.9)
STRAND_D4 = (12.4 - 1.1, 12.4 + 1.1)

STRAND_CONTACT = (4.2, 5.2)
MIN_HELIX_RUN = 5
MIN_STRAND_RUN = 4
SHORT_STRAND_RUN = 3
SHORT_STRAND_CONTACTS = 5
MIN_LENGTH = 5


@dataclass
class SecondaryStructure:
    """Per-residue assignment plus normalised fractions."""

    labels: np.ndarray
    alpha: float
    beta: float
    coil: float

    def to_dict(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "coil": self.coil}

    @property
    def string(self) -> str:
        return "".join(self.labels.tolist())


def _within(values: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    return (values >= window[0]) & (values <= window[1])


def _features(coords: np.ndarray) -> Dict[str, np.ndarray]:
    n = coords.shape[0]
    feats = {key: np.full(n, -np.inf) for key in ("d2", "d3", "d4", "angle", "dihedral")}
    for key, offset in (("d2", 2), ("d3", 3), ("d4", 4)):
        if n > offset:
            feats[key][1 : n - offset + 1] = np.linalg.norm(
                coords[offset:] - coords[:-offset], axis=1
            )
    if n >= 3:
        feats["angle"][1:-1] = bond_angles(coords)
    if n >= 4:
        feats["dihedral"][1:-2] = dihedral_angles(coords)
    return feats


def _runs(mask: np.ndarray):
    """Yield (start, stop) for every maximal run of True values."""
    start = None
    for i, value in enumerate(mask.tolist() + [False]):
        if value and start is None:
            start = i
        elif not value and start is not None:
            yield start, i
            start = None


def assign_secondary_structure(backbone: "Backbone | np.ndarray") -> SecondaryStructure:
    coords = as_coords(backbone)
    n = coords.shape[0]
    if n < MIN_LENGTH:
        raise ValueError(f"Secondary structure assignment needs L >= {MIN_LENGTH}, got {n}")
    f = _features(coords)
    labels = np.full(n, COIL, dtype="<U1")

    potential_helix = (_within(f["d3"], HELIX_D3) & _within(f["d4"], HELIX_D4)) | (
        _within(f["angle"], HELIX_ANGLE) & _within(f["dihedral"], HELIX_DIHEDRAL)
    )
    is_helix = np.zeros(n, dtype=bool)
    for start, stop in _runs(potential_helix):
        if stop - start >= MIN_HELIX_RUN:
            is_helix[start:stop] = True
    helix_extend = _within(f["d3"], HELIX_D3) | _within(f["angle"], HELIX_ANGLE)
    for i in np.flatnonzero(is_helix):
        labels[i] = HELIX
        if i > 0 and helix_extend[i - 1]:
            labels[i - 1] = HELIX
        if i + 1 < n and helix_extend[i + 1]:
            labels[i + 1] = HELIX

    strand_dihedral = _within(f["dihedral"], STRAND_DIHEDRAL[0]) | _within(
        f["dihedral"], STRAND_DIHEDRAL[1]
    )
    potential_strand = (
        _within(f["d2"], STRAND_D2) & _within(f["d3"], STRAND_D3) & _within(f["d4"], STRAND_D4)
    ) | (_within(f["angle"], STRAND_ANGLE) & strand_dihedral)
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    contacts = _within(dist, STRAND_CONTACT).sum(axis=1)
    is_strand = np.zeros(n, dtype=bool)
    for start, stop in _runs(potential_strand):
        length = stop - start
        if length >= MIN_STRAND_RUN or (
            length == SHORT_STRAND_RUN and contacts[start:stop].sum() >= SHORT_STRAND_CONTACTS
        ):
            is_strand[start:stop] = True
    strand_extend = _within(f["d3"], STRAND_D3)
    for i in np.flatnonzero(is_strand):
        labels[i] = STRAND
        if i > 0 and strand_extend[i - 1]:
            labels[i - 1] = STRAND
        if i + 1 < n and strand_extend[i + 1]:
            labels[i + 1] = STRAND

    alpha = float(np.count_nonzero(labels == HELIX)) / n
    beta = float(np.count_nonzero(labels == STRAND)) / n
    return SecondaryStructure(labels=labels, alpha=alpha, beta=beta, coil=1.0 - alpha - beta)
