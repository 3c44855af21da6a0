"""Checkpoint directories: config.json, weights.bin + weights_manifest.json, metadata.json."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch
from pydantic import ValidationError
from torch import nn

from apps.flow.errors import CheckpointError
from apps.flow.models.denoiser import Denoiser
from apps.flow.models.fold_classifier import FoldClassifier
from apps.flow.schemas.model import ClassifierConfig, ModelConfig
from libs.structures.backbone import LabelVocabulary

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
WEIGHTS_FILE = "weights.bin"
WEIGHTS_MANIFEST_FILE = "weights_manifest.json"
METADATA_FILE = "metadata.json"

_KINDS = {"denoiser": (Denoiser, ModelConfig), "classifier": (FoldClassifier, ClassifierConfig)}


@dataclass
class CheckpointMetadata:
    kind: str
    seed: int = 0
    step: int = 0
    dataset_id: str = ""
    vocabulary: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"Unknown checkpoint kind '{self.kind}'")

    @property
    def label_vocabulary(self) -> LabelVocabulary:
        return LabelVocabulary.from_dict(self.vocabulary)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def save_checkpoint(
    model: nn.Module,
    directory: Path | str,
    metadata: CheckpointMetadata,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with (directory / WEIGHTS_FILE).open("wb") as handle:
        for name, tensor in model.state_dict().items():
            array = tensor.detach().cpu().contiguous().numpy()
            blob = array.tobytes()
            entries.append(
                {
                    "name": name,
                    "shape": list(array.shape),
                    "dtype": str(array.dtype),
                    "offset": offset,
                    "nbytes": len(blob),
                }
            )
            handle.write(blob)
            offset += len(blob)
    (directory / WEIGHTS_MANIFEST_FILE).write_text(json.dumps(entries, indent=2), encoding="utf-8")
    (directory / CONFIG_FILE).write_text(model.config.model_dump_json(indent=2), encoding="utf-8")
    (directory / METADATA_FILE).write_text(json.dumps(metadata.to_dict(), indent=2), encoding="utf-8")
    logger.info("Saved %s checkpoint (step %s) to %s", metadata.kind, metadata.step, directory)
    return directory


def _read_json(path: Path) -> Any:
    if not path.exists():
        raise CheckpointError(f"Checkpoint file missing: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"Corrupted checkpoint file {path}: {exc}") from exc


def read_state_dict(directory: Path | str) -> Dict[str, torch.Tensor]:
    directory = Path(directory)
    entries = _read_json(directory / WEIGHTS_MANIFEST_FILE)
    weights_path = directory / WEIGHTS_FILE
    if not weights_path.exists():
        raise CheckpointError(f"Checkpoint file missing: {weights_path}")
    blob = weights_path.read_bytes()
    state: Dict[str, torch.Tensor] = {}
    for entry in entries:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if entry["offset"] + count * dtype.itemsize > len(blob) or count * dtype.itemsize != entry["nbytes"]:
            raise CheckpointError(f"Tensor '{entry['name']}' lies outside {weights_path}")
        array = np.frombuffer(blob, dtype=dtype, count=count, offset=entry["offset"])
        state[entry["name"]] = torch.from_numpy(array.reshape(entry["shape"]).copy())
    return state


def load_checkpoint(
    directory: Path | str, expected_kind: Optional[str] = None
) -> Tuple[nn.Module, CheckpointMetadata]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CheckpointError(f"No checkpoint directory at {directory}")
    raw_meta = _read_json(directory / METADATA_FILE)
    try:
        metadata = CheckpointMetadata(**raw_meta)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"Invalid checkpoint metadata in {directory}: {exc}") from exc
    if expected_kind is not None and metadata.kind != expected_kind:
        raise CheckpointError(f"Expected a {expected_kind} checkpoint, found {metadata.kind}")

    model_cls, config_cls = _KINDS[metadata.kind]
    try:
        config = config_cls.model_validate(_read_json(directory / CONFIG_FILE))
    except ValidationError as exc:
        raise CheckpointError(f"Invalid model config in {directory}: {exc}") from exc
    model = model_cls(config)
    state = read_state_dict(directory)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"Weights in {directory} do not fit the stored config: {exc}") from exc
    model.eval()
    return model, metadata


def load_denoiser(directory: Path | str) -> Tuple[Denoiser, CheckpointMetadata]:
    return load_checkpoint(directory, "denoiser")  # type: ignore[return-value]


def load_classifier(directory: Path | str) -> Tuple[FoldClassifier, CheckpointMetadata]:
    return load_checkpoint(directory, "classifier")  # type: ignore[return-value]
