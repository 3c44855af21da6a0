"""Dataset manifest and cluster-balanced sampling."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np

from .backbone import LabelVocabulary, StructureRecord
from .geometry import radius_of_gyration

logger = logging.getLogger(__name__)

RG_BUCKET_WIDTH = 2.0


@dataclass
class RecordIndexEntry:
    offset: int
    length: int

    def __post_init__(self):
        if self.offset < 0 or self.length < 2:
            raise ValueError(f"Invalid record index entry (offset={self.offset}, length={self.length})")


@dataclass
class DatasetManifest:
    """Record offsets, cluster assignment and label tables for one dataset."""

    index: Dict[str, RecordIndexEntry]
    clusters: Dict[str, str]
    vocabulary: LabelVocabulary = field(default_factory=LabelVocabulary)
    dataset_id: str = ""

    def __post_init__(self):
        missing = set(self.index) - set(self.clusters)
        extra = set(self.clusters) - set(self.index)
        if missing or extra:
            raise ValueError(
                f"Cluster assignment mismatch: {len(missing)} unassigned, {len(extra)} unknown ids"
            )

    @property
    def cluster_members(self) -> Dict[str, List[str]]:
        members: Dict[str, List[str]] = defaultdict(list)
        for record_id in sorted(self.clusters):
            members[self.clusters[record_id]].append(record_id)
        return dict(members)

    @property
    def n_clusters(self) -> int:
        return len(set(self.clusters.values()))


def cluster_key(
    record: StructureRecord,
    vocabulary: LabelVocabulary,
    rg_bucket_width: float = RG_BUCKET_WIDTH,
) -> str:
    """Fold code of the primary label plus a radius-of-gyration bucket."""
    label = record.primary_label
    code = vocabulary.decode(label) if label is not None and not label.is_null else "unlabeled"
    bucket = int(radius_of_gyration(record.backbone) // rg_bucket_width)
    return f"{code}|rg{bucket}"


def build_manifest(
    records: Sequence[StructureRecord],
    vocabulary: LabelVocabulary,
    dataset_id: str = "",
    rg_bucket_width: float = RG_BUCKET_WIDTH,
) -> DatasetManifest:
    index: Dict[str, RecordIndexEntry] = {}
    clusters: Dict[str, str] = {}
    offset = 0
    for record in records:
        if record.source_id in index:
            raise ValueError(f"Duplicate record id '{record.source_id}'")
        index[record.source_id] = RecordIndexEntry(offset=offset, length=record.length)
        clusters[record.source_id] = cluster_key(record, vocabulary, rg_bucket_width)
        offset += record.length
    return DatasetManifest(index=index, clusters=clusters, vocabulary=vocabulary, dataset_id=dataset_id)


def cluster_balanced_epoch(manifest: DatasetManifest, rng: np.random.Generator) -> List[str]:
    """One id per cluster, clusters visited once each in shuffled order."""
    members = manifest.cluster_members
    keys = sorted(members)
    picks: List[str] = []
    for k in rng.permutation(len(keys)):
        group = members[keys[k]]
        picks.append(group[int(rng.integers(len(group)))])
    return picks


def cluster_balanced_iterator(
    manifest: DatasetManifest,
    rng: np.random.Generator,
    records: Mapping[str, StructureRecord],
    n_epochs: Optional[int] = 1,
) -> Iterator[StructureRecord]:
    """Stream records epoch by epoch; ``n_epochs=None`` streams forever."""
    if manifest.n_clusters == 0:
        return
    epoch = 0
    while n_epochs is None or epoch < n_epochs:
        for record_id in cluster_balanced_epoch(manifest, rng):
            yield records[record_id]
        epoch += 1
