"""Cα ingestion from PDB-format files and Cα-only PDB output."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from Bio.PDB import PDBIO, PDBParser
from Bio.PDB.StructureBuilder import StructureBuilder

from .backbone import Backbone, StructureRecord
from .geometry import consecutive_distances

logger = logging.getLogger(__name__)

CHAIN_BREAK_DISTANCE = 4.5
FLAG_CHAIN_BREAK = "chain_break"
FLAG_CONFIDENCE_OUT_OF_RANGE = "bfactor_out_of_range"


class IngestionError(ValueError):
    """Raised when a structure file cannot provide a usable Cα trace."""


def _select_altloc(atom):
    if atom.is_disordered():
        return max(atom.disordered_get_list(), key=lambda alt: alt.get_occupancy() or 0.0)
    return atom


def ingest_calpha(path: Path | str, chain_id: Optional[str] = None) -> StructureRecord:
    """Read the first model of ``path`` and return its Cα trace as a record.

    Alternate locations resolve to the highest-occupancy conformer. B-factors are
    kept as per-residue confidence when they all fall in [0, 100].
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Structure file not found: {path}")
    parser = PDBParser(QUIET=True)
    structure = parser.get_structure(path.stem, str(path))
    models = list(structure)
    if not models:
        raise IngestionError(f"{path} contains no models")
    model = models[0]
    chains = [chain.id for chain in model]
    if chain_id is None:
        if len(chains) != 1:
            raise IngestionError(
                f"{path} has {len(chains)} chains; choose one of: {', '.join(chains)}"
            )
        chain_id = chains[0]
    if chain_id not in chains:
        raise IngestionError(f"Chain '{chain_id}' not in {path}; available: {', '.join(chains)}")

    coords: List[np.ndarray] = []
    bfactors: List[float] = []
    for residue in model[chain_id]:
        if residue.id[0] != " " or "CA" not in residue:
            continue
        atom = _select_altloc(residue["CA"])
        coords.append(np.asarray(atom.get_coord(), dtype=np.float64))
        bfactors.append(float(atom.get_bfactor()))
    if not coords:
        raise IngestionError(f"No Cα atoms found in chain '{chain_id}' of {path}")
    if len(coords) < 2:
        raise IngestionError(f"Chain '{chain_id}' of {path} has a single Cα atom")

    # PDB columns carry 3 decimals; undo the float32 round-trip of the parser.
    xyz = np.round(np.stack(coords), 3)
    flags: List[str] = []
    gaps = np.flatnonzero(consecutive_distances(xyz) > CHAIN_BREAK_DISTANCE)
    if gaps.size:
        flags.append(FLAG_CHAIN_BREAK)
        logger.warning("Chain break in %s chain %s after residues %s", path, chain_id, gaps.tolist())

    confidence: Optional[np.ndarray] = np.round(np.asarray(bfactors), 2)
    if confidence.min() < 0.0 or confidence.max() > 100.0:
        flags.append(FLAG_CONFIDENCE_OUT_OF_RANGE)
        confidence = None

    return StructureRecord(
        backbone=Backbone(xyz),
        source_id=f"{path.stem}:{chain_id}",
        per_residue_confidence=confidence,
        flags=flags,
        metadata={"path": str(path), "chain": chain_id},
    )


def write_calpha_pdb(
    backbone: Backbone,
    path: Path | str,
    chain_id: str = "A",
    confidence: Optional[np.ndarray] = None,
) -> Path:
    """Write a Cα-only PDB file with glycine placeholders."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    builder = StructureBuilder()
    builder.init_structure(path.stem)
    builder.init_model(0)
    builder.init_chain(chain_id)
    builder.init_seg("    ")
    for i, xyz in enumerate(backbone.coords, start=1):
        bfactor = float(confidence[i - 1]) if confidence is not None else 0.0
        builder.init_residue("GLY", " ", i, " ")
        builder.init_atom("CA", xyz.astype(np.float32), bfactor, 1.0, " ", " CA ", i, "C")
    io = PDBIO()
    io.set_structure(builder.get_structure())
    io.save(str(path))
    return path
