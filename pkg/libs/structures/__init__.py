"""
Structure package exports
"""

from .backbone import (
    LEVELS,
    Backbone,
    FoldLabel,
    LabelVocabulary,
    Rotation,
    StructureRecord,
)
from .clustering import (
    DatasetManifest,
    build_manifest,
    cluster_balanced_epoch,
    cluster_balanced_iterator,
)
from .filters import FilterConfig, apply_filters
from .generators import ToyClassSpec, default_toy_classes, generate_toy_dataset
from .geometry import (
    center_backbone,
    kabsch_align,
    pair_distance_bins,
    radius_of_gyration,
    random_rotation,
    tm_proxy,
)
from .ingestion import IngestionError, ingest_calpha, write_calpha_pdb
from .secondary_structure import SecondaryStructure, assign_secondary_structure
from .storage import DatasetFormatError, load_dataset, save_dataset

__all__ = [
    "LEVELS",
    "Backbone",
    "FoldLabel",
    "LabelVocabulary",
    "Rotation",
    "StructureRecord",
    "DatasetManifest",
    "build_manifest",
    "cluster_balanced_epoch",
    "cluster_balanced_iterator",
    "FilterConfig",
    "apply_filters",
    "ToyClassSpec",
    "default_toy_classes",
    "generate_toy_dataset",
    "center_backbone",
    "kabsch_align",
    "pair_distance_bins",
    "radius_of_gyration",
    "random_rotation",
    "tm_proxy",
    "IngestionError",
    "ingest_calpha",
    "write_calpha_pdb",
    "SecondaryStructure",
    "assign_secondary_structure",
    "DatasetFormatError",
    "load_dataset",
    "save_dataset",
]
