"""FlowFold command line.

Usage:
    flowfold toydata --out data/toy --n 600
    flowfold train --dataset data/toy --out runs/base --steps 2000 --save-bad-at 200
    flowfold lora-finetune --checkpoint runs/base/checkpoint --dataset data/shifted --out runs/lora
    flowfold sample --checkpoint runs/base/checkpoint --length 64 --n 16 --label 1.10.8 --omega 2
    flowfold classify-train --dataset data/toy --out runs/classifier
    flowfold eval --samples runs/samples --reference data/toy --classifier runs/classifier/classifier
    flowfold reclass --samples runs/samples --classifier runs/classifier/classifier
    flowfold equiv --checkpoint runs/base/checkpoint --dataset data/toy --out runs/equiv

Relative --out paths are placed under FLOWFOLD_OUTPUT_ROOT.

Exit codes: 0 ok, 2 usage, 3 missing checkpoint or input, 4 invalid configuration,
5 non-finite numerics, 6 dataset or structure file format error.
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from pydantic import ValidationError

from apps.flow.config import get_settings
from apps.flow.errors import CheckpointError, NonFiniteError, UsageError
from apps.flow.models.denoiser import Denoiser
from apps.flow.models.lora import apply_lora, lora_parameters
from apps.flow.schemas.run import EVAL_CONFIG_FILE, RECLASS_CONFIG_FILE, RunConfig
from apps.flow.schemas.sampling import GT_KINDS
from apps.flow.services.checkpoint_store import (
    CheckpointMetadata,
    load_classifier,
    load_denoiser,
    save_checkpoint,
)
from apps.flow.services.classifier import accuracy, reclassify, train_classifier
from apps.flow.services.equivariance import equivariance_analysis
from apps.flow.services.hardware import select_device, write_hardware_log
from apps.flow.services.report import evaluate_structure_set, write_report
from apps.flow.services.sampler import DenoiserField, GuidanceSpec, build_time_grid, sample
from apps.flow.workers.trainer import train_denoiser
from libs.structures.backbone import Backbone, FoldLabel, LabelVocabulary, StructureRecord
from libs.structures.clustering import build_manifest
from libs.structures.filters import FilterConfig, apply_filters
from libs.structures.generators import default_toy_classes, generate_toy_dataset, toy_vocabulary
from libs.structures.ingestion import IngestionError, write_calpha_pdb
from libs.structures.storage import DatasetFormatError, load_dataset, save_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_NON_FINITE = 5
EXIT_DATA_FORMAT = 6

SAMPLES_FILE = "samples.npy"
SAMPLES_MANIFEST = "manifest.json"
PDB_DIR = "pdb"
TRAJECTORY_FILE = "trajectory.npy"
TRAJECTORY_MANIFEST = "trajectory.json"
EQUIVARIANCE_CSV = "equivariance.csv"
RECLASS_FILE = "reclass.json"
CLASSIFIER_DIR = "classifier"
CLASSIFIER_LOG = "classifier_training.csv"


# ============================================================================
# Shared helpers
# ============================================================================


def resolve_out(path: str) -> Path:
    out = Path(path).expanduser()
    if not out.is_absolute():
        out = Path(get_settings().FLOWFOLD_OUTPUT_ROOT) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        config = RunConfig.load(path)
    else:
        config = RunConfig(seed=get_settings().FLOWFOLD_DEFAULT_SEED)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


def seeded_rng(config: RunConfig) -> np.random.Generator:
    torch.manual_seed(config.seed)
    return np.random.default_rng(config.seed)


def remap_labels(
    records: Sequence[StructureRecord], source: LabelVocabulary, target: LabelVocabulary
) -> List[StructureRecord]:
    """Re-encode record labels from one vocabulary into another by fold code."""
    if source == target:
        return list(records)
    remapped = []
    for record in records:
        labels = [target.encode(source.decode(label)) for label in record.labels]
        remapped.append(
            StructureRecord(
                backbone=record.backbone,
                source_id=record.source_id,
                labels=labels,
                per_residue_confidence=record.per_residue_confidence,
                flags=list(record.flags),
                metadata=dict(record.metadata),
            )
        )
    return remapped


def load_samples(directory: Path) -> tuple[List[Backbone], Dict]:
    samples_path = directory / SAMPLES_FILE
    if not samples_path.exists():
        raise FileNotFoundError(f"No samples at {samples_path}")
    coords = np.load(samples_path)
    manifest_path = directory / SAMPLES_MANIFEST
    manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}
    return [Backbone(c) for c in coords], manifest


# ============================================================================
# Commands
# ============================================================================


def cmd_toydata(args: argparse.Namespace) -> int:
    config = load_run_config(args).updated(
        "data", n_structures=args.n, length=args.length, jitter=args.jitter
    )
    if args.no_filters:
        config = config.updated("data", apply_filters=False)
    rng = seeded_rng(config)
    out = resolve_out(args.out)

    classes = default_toy_classes(config.data.length, config.data.jitter)
    vocabulary = toy_vocabulary(classes)
    records = generate_toy_dataset(config.data.n_structures, classes, rng)
    if config.data.apply_filters:
        records, rejected = apply_filters(
            records, FilterConfig(min_len=min(32, config.data.length - 1))
        )
        if rejected:
            logger.warning("Filters rejected %s of %s toy structures", len(rejected), config.data.n_structures)
    manifest = build_manifest(records, vocabulary)
    save_dataset(records, manifest, out)
    config.updated("data", dataset=str(out)).save(out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    config = config.updated("data", dataset=args.dataset)
    config = config.updated(
        "objective",
        n_steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        save_bad_at=args.save_bad_at,
    )
    config = config.updated(
        "model",
        n_blocks=args.blocks,
        seq_dim=args.seq_dim,
        pair_dim=args.pair_dim,
        n_pair_updates=args.pair_updates,
    )
    if not config.data.dataset:
        raise ValueError("train needs --dataset or data.dataset in the config")
    records, manifest = load_dataset(config.data.dataset)
    n_c, n_a, n_t = manifest.vocabulary.sizes
    config = config.updated("model", n_c_classes=n_c, n_a_classes=n_a, n_t_classes=n_t)

    out = resolve_out(args.out)
    config.save(out)
    seeded_rng(config)
    device = select_device(args.device or get_settings().FLOWFOLD_DEVICE)
    model = Denoiser(config.model).to(device)
    summary = train_denoiser(
        model, records, manifest, config.objective, out, seed=config.seed, progress=not args.quiet
    )
    logger.info(
        "Trained %s steps, final loss %.4f, checkpoint at %s",
        summary.steps, summary.losses[-1], summary.checkpoint,
    )
    return EXIT_OK


def cmd_lora_finetune(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    config = config.updated("data", dataset=args.dataset)
    config = config.updated("objective", n_steps=args.steps, batch_size=args.batch_size, learning_rate=args.lr)
    config = config.updated("lora", rank=args.rank, scale=args.scale)
    if not config.data.dataset:
        raise ValueError("lora-finetune needs --dataset or data.dataset in the config")

    model, metadata = load_denoiser(args.checkpoint)
    records, manifest = load_dataset(config.data.dataset)
    records = remap_labels(records, manifest.vocabulary, metadata.label_vocabulary)
    manifest = build_manifest(records, metadata.label_vocabulary, dataset_id=manifest.dataset_id)
    config = config.model_copy(update={"model": model.config})

    out = resolve_out(args.out)
    config.save(out)
    seeded_rng(config)
    device = select_device(args.device or get_settings().FLOWFOLD_DEVICE)
    model = apply_lora(model.to(device), rank=config.lora.rank, scale=config.lora.scale)
    summary = train_denoiser(
        model,
        records,
        manifest,
        config.objective,
        out,
        seed=config.seed,
        parameters=lora_parameters(model),
        progress=not args.quiet,
    )
    logger.info("Adapter fine-tuning done after %s steps; merged checkpoint at %s", summary.steps, summary.checkpoint)
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    gt = "zero" if args.ode else args.gt
    config = config.updated(
        "sampler",
        n_steps=args.steps,
        gamma=args.gamma,
        self_conditioning=args.self_cond,
        n_samples=args.n,
        length=args.length,
        batch_size=args.batch_size,
    )
    if gt is not None:
        config = config.updated("sampler", schedule={"kind": gt, "cutoff": config.sampler.schedule.cutoff})
    config = config.updated(
        "guidance", omega=args.omega, alpha=args.alpha, label=args.label, bad_checkpoint=args.bad_checkpoint
    )

    model, metadata = load_denoiser(args.checkpoint)
    device = select_device(args.device or get_settings().FLOWFOLD_DEVICE)
    model = model.to(device)
    vocabulary = metadata.label_vocabulary
    label: Optional[FoldLabel] = vocabulary.encode(config.guidance.label) if config.guidance.label else None
    bad_field = None
    if config.guidance.alpha > 0:
        bad_model, _ = load_denoiser(config.guidance.bad_checkpoint)
        bad_field = DenoiserField(bad_model.to(device))
    guidance = GuidanceSpec(
        omega=config.guidance.omega, alpha=config.guidance.alpha, label=label, bad_field=bad_field
    )

    out = resolve_out(args.out)
    config.save(out)
    rng = seeded_rng(config)
    schedule = build_time_grid(config.sampler.n_steps)
    trajectory: Optional[List[np.ndarray]] = [] if args.dump_trajectory else None
    backbones = sample(
        model,
        length=config.sampler.length,
        n_samples=config.sampler.n_samples,
        guidance=guidance,
        gamma=config.sampler.gamma,
        schedule=schedule,
        g_schedule=config.sampler.schedule,
        rng=rng,
        self_conditioning=config.sampler.self_conditioning,
        batch_size=config.sampler.batch_size,
        trajectory=trajectory,
    )

    files = []
    for i, backbone in enumerate(backbones):
        path = write_calpha_pdb(backbone, out / PDB_DIR / f"sample_{i:04d}.pdb")
        files.append(str(path.relative_to(out)))
    np.save(out / SAMPLES_FILE, np.stack([b.coords for b in backbones]))
    manifest = {
        "checkpoint": str(args.checkpoint),
        "checkpoint_step": metadata.step,
        "seed": config.seed,
        "n_samples": len(backbones),
        "length": config.sampler.length,
        "label": config.guidance.label,
        "omega": config.guidance.omega,
        "alpha": config.guidance.alpha,
        "gamma": config.sampler.gamma,
        "schedule": config.sampler.schedule.kind,
        "n_steps": schedule.n_steps,
        "self_conditioning": config.sampler.self_conditioning,
        "vocabulary": vocabulary.to_dict(),
        "files": files,
    }
    (out / SAMPLES_MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    if trajectory is not None:
        np.save(out / TRAJECTORY_FILE, np.stack(trajectory))
        (out / TRAJECTORY_MANIFEST).write_text(
            json.dumps({"time_grid": schedule.grid.tolist(), "shape": list(np.shape(trajectory))}, indent=2),
            encoding="utf-8",
        )
    logger.info("Wrote %s samples to %s", len(backbones), out)
    return EXIT_OK


def cmd_classify_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    config = config.updated("data", dataset=args.dataset)
    config = config.updated(
        "classifier", epochs=args.epochs, hidden_dim=args.hidden, n_layers=args.layers, learning_rate=args.lr
    )
    if not config.data.dataset:
        raise ValueError("classify-train needs --dataset or data.dataset in the config")
    records, manifest = load_dataset(config.data.dataset)
    n_c, n_a, n_t = manifest.vocabulary.sizes
    config = config.updated("classifier", n_c_classes=n_c, n_a_classes=n_a, n_t_classes=n_t)

    out = resolve_out(args.out)
    config.save(out)
    write_hardware_log(out)
    rng = seeded_rng(config)
    result = train_classifier(records, config.classifier, rng)
    train_accuracy = accuracy(result.model, records, "T", result.excluded_classes.get("T", ()))
    logger.info("Classifier T-level training accuracy: %.3f", train_accuracy)
    save_checkpoint(
        result.model,
        out / CLASSIFIER_DIR,
        CheckpointMetadata(
            kind="classifier",
            seed=config.seed,
            step=config.classifier.epochs,
            dataset_id=manifest.dataset_id,
            vocabulary=manifest.vocabulary.to_dict(),
            extra={
                "excluded_classes": result.excluded_classes,
                "train_accuracy_t": train_accuracy,
            },
        ),
    )
    pd.DataFrame(
        {"epoch": range(1, len(result.epoch_losses) + 1), "loss": result.epoch_losses}
    ).to_csv(out / CLASSIFIER_LOG, index=False)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    config = config.updated("metrics", sample_budget=args.budget or get_settings().FLOWFOLD_METRIC_SAMPLE_BUDGET)
    samples, _ = load_samples(Path(args.samples))
    records, _ = load_dataset(args.reference)
    classifier, _ = load_classifier(args.classifier)
    scrmsd = None
    if args.scrmsd:
        scrmsd_path = Path(args.scrmsd)
        if not scrmsd_path.exists():
            raise FileNotFoundError(f"No scRMSD file at {scrmsd_path}")
        scrmsd = np.loadtxt(scrmsd_path, dtype=np.float64, ndmin=1)
        if len(scrmsd) != len(samples):
            raise UsageError(f"Expected {len(samples)} scRMSD values, got {len(scrmsd)}")
    budget = config.metrics.sample_budget
    reference = [record.backbone for record in records[:budget]]
    if len(samples) > budget:
        logger.warning("Using the first %s of %s samples", budget, len(samples))
        samples = samples[:budget]
        scrmsd = scrmsd[:budget] if scrmsd is not None else None

    out = resolve_out(args.out) if args.out else Path(args.samples)
    config.save(out, EVAL_CONFIG_FILE)
    report = evaluate_structure_set(samples, reference, classifier, config.metrics, scrmsd)
    write_report(report, out)
    return EXIT_OK


def cmd_reclass(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    samples, manifest = load_samples(Path(args.samples))
    classifier, metadata = load_classifier(args.classifier)
    code = args.label or manifest.get("label")
    if not code:
        raise ValueError("reclass needs a conditioned sample set (--label or a labelled sample manifest)")
    label = metadata.label_vocabulary.encode(code)
    if label.get(args.level) is None:
        raise ValueError(f"Label '{code}' has no {args.level}-level class")
    result = reclassify(classifier, samples, [label] * len(samples), args.level)

    out = resolve_out(args.out) if args.out else Path(args.samples)
    config.save(out, RECLASS_CONFIG_FILE)
    document = {
        "label": code,
        "level": args.level,
        "omega": manifest.get("omega"),
        "alpha": manifest.get("alpha"),
        "mean_probability": result.mean_probability,
        "n_scored": result.n_scored,
        "n_skipped": result.n_skipped,
    }
    (out / RECLASS_FILE).write_text(json.dumps(document, indent=2), encoding="utf-8")
    logger.info("Re-classification probability for %s at level %s: %.3f", code, args.level, result.mean_probability)
    return EXIT_OK


def cmd_equiv(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    config = config.updated(
        "metrics",
        equivariance_mc_samples=args.n_mc or get_settings().FLOWFOLD_EQUIVARIANCE_MC_SAMPLES,
        equivariance_t_grid=args.t_grid,
    )
    model, _ = load_denoiser(args.checkpoint)
    records, _ = load_dataset(args.dataset)
    device = select_device(args.device or get_settings().FLOWFOLD_DEVICE)

    out = resolve_out(args.out)
    config.save(out)
    rng = seeded_rng(config)
    report = equivariance_analysis(
        DenoiserField(model.to(device)),
        [record.backbone for record in records],
        config.metrics.equivariance_t_grid,
        config.metrics.equivariance_mc_samples,
        rng,
    )
    report.to_frame().to_csv(out / EQUIVARIANCE_CSV, index=False)
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run config JSON; flags override its values")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--device", choices=["auto", "cpu", "cuda", "mps"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowfold", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--log-level", default=None, help="Overrides FLOWFOLD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toydata", help="Generate a synthetic labelled dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="Number of structures before filtering")
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--jitter", type=float, default=None, help="Coordinate jitter in Å")
    p.add_argument("--no-filters", action="store_true")
    p.set_defaults(handler=cmd_toydata)

    p = sub.add_parser("train", help="Train a denoiser")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--save-bad-at", type=int, default=None, help="Keep an early checkpoint for autoguidance")
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--seq-dim", type=int, default=None)
    p.add_argument("--pair-dim", type=int, default=None)
    p.add_argument("--pair-updates", type=int, default=None)
    p.add_argument("--quiet", action="store_true", help="No progress bar")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("lora-finetune", help="Fine-tune low-rank adapters on a trained denoiser")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_lora_finetune)

    p = sub.add_parser("sample", help="Generate backbones")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="Number of backbones")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gt", choices=[kind.replace("_", "-") for kind in GT_KINDS], default=None)
    p.add_argument("--ode", action="store_true", help="Same as --gt zero")
    p.add_argument("--self-cond", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--label", default=None, help="Fold code C[.A[.T]]")
    p.add_argument("--bad-checkpoint", default=None)
    p.add_argument("--dump-trajectory", action="store_true")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="Report metrics for a sample directory")
    _common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--reference", required=True, help="Reference dataset directory")
    p.add_argument("--classifier", required=True)
    p.add_argument("--scrmsd", default=None, help="Text file with one scRMSD (Å) per sample")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", default=None, help="Defaults to the sample directory")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("reclass", help="Re-classification probability of a conditioned sample set")
    _common(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--label", default=None, help="Defaults to the label in the sample manifest")
    p.add_argument("--level", choices=["C", "A", "T"], default="T")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_reclass)

    p = sub.add_parser("equiv", help="Equivariance errors of a denoiser over t")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-mc", type=int, default=None)
    p.add_argument("--t-grid", type=float, nargs="+", default=None)
    p.set_defaults(handler=cmd_equiv)

    p = sub.add_parser("classify-train", help="Train the fold classifier")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(handler=cmd_classify_train)
    return parser


ERROR_CODES: List[tuple[type, int]] = [
    (UsageError, EXIT_USAGE),
    (ValidationError, EXIT_CONFIG),
    (CheckpointError, EXIT_MISSING),
    (FileNotFoundError, EXIT_MISSING),
    (NonFiniteError, EXIT_NON_FINITE),
    (DatasetFormatError, EXIT_DATA_FORMAT),
    (IngestionError, EXIT_DATA_FORMAT),
    (ValueError, EXIT_CONFIG),
]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    settings = get_settings()
    logging.basicConfig(
        level=(args.log_level or settings.FLOWFOLD_LOG_LEVEL).upper(),
        format="[%(asctime)s] %(levelname)s: %(message)s",
        # the trainer module configures logging on import
        force=True,
    )
    if settings.FLOWFOLD_TORCH_NUM_THREADS:
        torch.set_num_threads(settings.FLOWFOLD_TORCH_NUM_THREADS)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except Exception as exc:
        for error_type, code in ERROR_CODES:
            if isinstance(exc, error_type):
                logger.error("%s failed: %s", args.command, exc)
                return code
        raise


if __name__ == "__main__":
    raise SystemExit(main())
