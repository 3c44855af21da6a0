"""On-disk dataset container: ``coords.npy`` + ``confidence.npy`` + ``manifest.json``."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from .backbone import Backbone, FoldLabel, LabelVocabulary, StructureRecord
from .clustering import DatasetManifest, RecordIndexEntry

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
COORDS_FILE = "coords.npy"
CONFIDENCE_FILE = "confidence.npy"
MANIFEST_FILE = "manifest.json"


class DatasetFormatError(ValueError):
    """Raised when a dataset directory is corrupt or of an unsupported version."""


def dataset_fingerprint(coords: np.ndarray, manifest_payload: Dict[str, Any]) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(coords).tobytes())
    digest.update(json.dumps(manifest_payload, sort_keys=True).encode())
    return digest.hexdigest()[:16]


def save_dataset(
    records: List[StructureRecord], manifest: DatasetManifest, path: Path | str
) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    by_id = {record.source_id: record for record in records}
    if set(by_id) != set(manifest.index):
        raise ValueError("Records and manifest index describe different ids")

    ordered = sorted(manifest.index.items(), key=lambda item: item[1].offset)
    total = sum(entry.length for _, entry in ordered)
    coords = np.zeros((total, 3), dtype=np.float64)
    confidence = np.full(total, np.nan, dtype=np.float64)
    entries: List[Dict[str, Any]] = []
    for record_id, entry in ordered:
        record = by_id[record_id]
        if record.length != entry.length:
            raise ValueError(f"Manifest length for '{record_id}' does not match record")
        stop = entry.offset + entry.length
        coords[entry.offset : stop] = record.backbone.coords
        if record.per_residue_confidence is not None:
            confidence[entry.offset : stop] = record.per_residue_confidence
        entries.append(
            {
                "id": record_id,
                "offset": entry.offset,
                "length": entry.length,
                "labels": [list(label.as_tuple()) for label in record.labels],
                "has_confidence": record.per_residue_confidence is not None,
                "flags": list(record.flags),
                "metadata": record.metadata,
            }
        )

    payload: Dict[str, Any] = {
        "records": entries,
        "clusters": dict(sorted(manifest.clusters.items())),
        "vocabulary": manifest.vocabulary.to_dict(),
    }
    dataset_id = manifest.dataset_id or dataset_fingerprint(coords, payload)
    document = {"format_version": FORMAT_VERSION, "dataset_id": dataset_id, "total_residues": total}
    document.update(payload)

    np.save(path / COORDS_FILE, coords)
    np.save(path / CONFIDENCE_FILE, confidence)
    (path / MANIFEST_FILE).write_text(json.dumps(document, indent=2), encoding="utf-8")
    logger.info("Saved dataset %s (%s records) to %s", dataset_id, len(entries), path)
    return path


def load_dataset(path: Path | str) -> Tuple[List[StructureRecord], DatasetManifest]:
    path = Path(path)
    manifest_path = path / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"No dataset manifest at {manifest_path}")
    try:
        document = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"Corrupted manifest at {manifest_path}: {exc}") from exc

    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"Unsupported dataset format version {version!r} (expected {FORMAT_VERSION})"
        )
    coords = np.load(path / COORDS_FILE)
    confidence = np.load(path / CONFIDENCE_FILE)
    if coords.ndim != 2 or coords.shape[1] != 3 or confidence.shape != (coords.shape[0],):
        raise DatasetFormatError(f"Array shapes in {path} are inconsistent")
    if document.get("total_residues") != coords.shape[0]:
        raise DatasetFormatError(
            f"Manifest declares {document.get('total_residues')} residues, arrays hold {coords.shape[0]}"
        )

    vocabulary = LabelVocabulary.from_dict(document.get("vocabulary", {}))
    records: List[StructureRecord] = []
    index: Dict[str, RecordIndexEntry] = {}
    covered = 0
    for entry in document.get("records", []):
        offset, length = int(entry["offset"]), int(entry["length"])
        if offset != covered or offset + length > coords.shape[0]:
            raise DatasetFormatError(
                f"Record '{entry['id']}' spans [{offset}, {offset + length}) outside the stored arrays"
            )
        covered = offset + length
        conf = confidence[offset:covered].copy() if entry.get("has_confidence") else None
        try:
            record = StructureRecord(
                backbone=Backbone(coords[offset:covered].copy()),
                source_id=entry["id"],
                labels=[FoldLabel(*label) for label in entry.get("labels", [])],
                per_residue_confidence=conf,
                flags=list(entry.get("flags", [])),
                metadata=dict(entry.get("metadata", {})),
            )
        except ValueError as exc:
            raise DatasetFormatError(f"Invalid record '{entry['id']}': {exc}") from exc
        records.append(record)
        index[record.source_id] = RecordIndexEntry(offset=offset, length=length)
    if covered != coords.shape[0]:
        raise DatasetFormatError(f"Records cover {covered} residues, arrays hold {coords.shape[0]}")

    try:
        manifest = DatasetManifest(
            index=index,
            clusters=dict(document.get("clusters", {})),
            vocabulary=vocabulary,
            dataset_id=document.get("dataset_id", ""),
        )
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc
    return records, manifest
