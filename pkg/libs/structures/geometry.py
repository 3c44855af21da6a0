"""Geometric primitives on Cα traces: centering, rotations, superposition, binning."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import distance
from scipy.spatial.transform import Rotation as ScipyRotation

from .backbone import Backbone, Rotation, as_coords

logger = logging.getLogger(__name__)

TM_MIN_LENGTH = 15


def center_backbone(backbone: Backbone, mask: Optional[np.ndarray] = None) -> Backbone:
    """Translate so the (masked) centroid sits at the origin."""
    coords = as_coords(backbone)
    if mask is None:
        centroid = coords.mean(axis=0)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (coords.shape[0],):
            raise ValueError(f"Mask shape {mask.shape} does not match length {coords.shape[0]}")
        if not mask.any():
            raise ValueError("Cannot center on an empty mask")
        centroid = coords[mask].mean(axis=0)
    return Backbone(coords - centroid)


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-uniform draw from SO(3)."""
    return Rotation(ScipyRotation.random(random_state=rng).as_matrix())


def kabsch_align(
    a: "Backbone | np.ndarray", b: "Backbone | np.ndarray"
) -> tuple[Rotation, float]:
    """Rotation R minimising RMSD between centered ``a @ R.T`` and centered ``b``.

    Both inputs are centered internally; the returned rmsd is in Å.
    """
    ca, cb = as_coords(a), as_coords(b)
    if ca.shape != cb.shape:
        raise ValueError(f"kabsch_align needs equal shapes, got {ca.shape} and {cb.shape}")
    if ca.shape[0] < 3:
        raise ValueError("kabsch_align needs at least 3 points")
    ca = ca - ca.mean(axis=0)
    cb = cb - cb.mean(axis=0)

    h = ca.T @ cb
    u, _, vt = np.linalg.svd(h)
    # reflection guard
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    matrix = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    rotation = Rotation(matrix)
    diff = cb - ca @ matrix.T
    rmsd = float(np.sqrt((diff**2).sum(axis=1).mean()))
    return rotation, rmsd


def rmsd(a: "Backbone | np.ndarray", b: "Backbone | np.ndarray") -> float:
    """Plain RMSD with fixed correspondence and no superposition."""
    ca, cb = as_coords(a), as_coords(b)
    if ca.shape != cb.shape:
        raise ValueError(f"rmsd needs equal shapes, got {ca.shape} and {cb.shape}")
    return float(np.sqrt(((ca - cb) ** 2).sum(axis=1).mean()))


def radius_of_gyration(backbone: "Backbone | np.ndarray") -> float:
    coords = as_coords(backbone)
    if coords.shape[0] < 2:
        raise ValueError("radius_of_gyration needs at least 2 residues")
    centered = coords - coords.mean(axis=0)
    return float(np.sqrt((centered**2).sum(axis=1).mean()))


def pairwise_distances(backbone: "Backbone | np.ndarray") -> np.ndarray:
    """Symmetric (L, L) Euclidean distance matrix with an exact zero diagonal."""
    return distance.squareform(distance.pdist(as_coords(backbone)))


def bin_distances(
    distances: np.ndarray, n_bins: int, d_min: float, d_max: float
) -> np.ndarray:
    """Bin 0 is < d_min, last bin is >= d_max, interior bins are left-closed."""
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    if not d_min < d_max:
        raise ValueError(f"d_min ({d_min}) must be below d_max ({d_max})")
    distances = np.asarray(distances, dtype=np.float64)
    if n_bins == 2:
        return (distances >= d_min).astype(np.int64)
    width = (d_max - d_min) / (n_bins - 2)
    interior = 1 + np.floor((np.maximum(distances, d_min) - d_min) / width).astype(np.int64)
    bins = np.where(distances < d_min, 0, interior)
    return np.clip(bins, 0, n_bins - 1)


def pair_distance_bins(
    backbone: "Backbone | np.ndarray",
    n_bins: int = 64,
    d_min: float = 1.0,
    d_max: float = 30.0,
) -> np.ndarray:
    return bin_distances(pairwise_distances(backbone), n_bins, d_min, d_max)


def tm_d0(length: int) -> float:
    return max(0.5, 1.24 * (length - 15) ** (1.0 / 3.0) - 1.8)


def _directed_tm(a: np.ndarray, b: np.ndarray) -> float:
    rotation, _ = kabsch_align(a, b)
    ca = a - a.mean(axis=0)
    cb = b - b.mean(axis=0)
    d = np.linalg.norm(cb - ca @ rotation.matrix.T, axis=1)
    d0 = tm_d0(a.shape[0])
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2)))


def tm_proxy(a: "Backbone | np.ndarray", b: "Backbone | np.ndarray") -> float:
    """TM-style score under fixed i<->i correspondence after Kabsch superposition.

    Averaged over both superposition directions so the score is symmetric.
    """
    ca, cb = as_coords(a), as_coords(b)
    if ca.shape != cb.shape:
        raise ValueError(f"tm_proxy needs equal lengths, got {ca.shape[0]} and {cb.shape[0]}")
    if ca.shape[0] < TM_MIN_LENGTH:
        raise ValueError(f"tm_proxy needs L >= {TM_MIN_LENGTH}, got {ca.shape[0]}")
    return 0.5 * (_directed_tm(ca, cb) + _directed_tm(cb, ca))


def pairwise_tm_proxy(backbones: Sequence["Backbone | np.ndarray"]) -> np.ndarray:
    """Symmetric matrix of tm_proxy over a same-length set (diagonal = 1)."""
    n = len(backbones)
    scores = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            scores[i, j] = scores[j, i] = tm_proxy(backbones[i], backbones[j])
    return scores


def consecutive_distances(backbone: "Backbone | np.ndarray") -> np.ndarray:
    coords = as_coords(backbone)
    return np.linalg.norm(np.diff(coords, axis=0), axis=1)


def bond_angles(coords: np.ndarray) -> np.ndarray:
    """Angle in degrees at each interior point ``i`` formed by (i-1, i, i+1)."""
    coords = as_coords(coords)
    u = coords[:-2] - coords[1:-1]
    v = coords[2:] - coords[1:-1]
    cos = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def dihedral_angles(coords: np.ndarray) -> np.ndarray:
    """Signed dihedral in degrees for every consecutive quadruple (i, i+1, i+2, i+3)."""
    coords = as_coords(coords)
    b1 = coords[1:-2] - coords[:-3]
    b2 = coords[2:-1] - coords[1:-2]
    b3 = coords[3:] - coords[2:-1]
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    y = np.linalg.norm(b2, axis=1) * (b1 * n2).sum(axis=1)
    x = (n1 * n2).sum(axis=1)
    return np.degrees(np.arctan2(y, x))
