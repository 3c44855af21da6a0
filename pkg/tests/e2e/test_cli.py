"""End-to-end tests for the flowfold command line, run in-process."""

import json
from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd
import pytest

from apps.flow.cli import (
    EQUIVARIANCE_CSV,
    EXIT_CONFIG,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_USAGE,
    RECLASS_FILE,
    SAMPLES_FILE,
    SAMPLES_MANIFEST,
    main,
)
from apps.flow.schemas.report import StructureSetReport
from apps.flow.schemas.run import EVAL_CONFIG_FILE, RECLASS_CONFIG_FILE, RUN_CONFIG_FILE, RunConfig
from apps.flow.services.report import LENGTHS_CSV, METRICS_CSV, REPORT_FILE, report_is_finite
from apps.flow.workers.trainer import FINAL_CHECKPOINT


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory) -> Dict[str, Path]:
    """toydata -> train -> sample -> classify-train, shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "data": root / "toy",
        "run": root / "base",
        "samples": root / "samples",
        "classifier": root / "classifier",
    }
    assert main(["toydata", "--out", str(paths["data"]), "--n", "30", "--length", "40", "--seed", "3"]) == EXIT_OK
    assert main([
        "train", "--dataset", str(paths["data"]), "--out", str(paths["run"]),
        "--steps", "20", "--blocks", "2", "--seq-dim", "32", "--pair-dim", "16", "--pair-updates", "1",
        "--batch-size", "4", "--quiet",
    ]) == EXIT_OK
    assert main([
        "sample", "--checkpoint", str(paths["run"] / FINAL_CHECKPOINT), "--out", str(paths["samples"]),
        "--n", "4", "--steps", "20", "--length", "40", "--label", "1.10.8", "--seed", "11",
    ]) == EXIT_OK
    assert main([
        "classify-train", "--dataset", str(paths["data"]), "--out", str(paths["classifier"]),
        "--epochs", "2", "--hidden", "16", "--layers", "1",
    ]) == EXIT_OK
    return paths


def _sample(checkpoint: Path, out: Path, *extra: str) -> np.ndarray:
    argv = ["sample", "--checkpoint", str(checkpoint), "--out", str(out), "--n", "3", "--steps", "10", "--length", "24"]
    assert main([*argv, *extra]) == EXIT_OK
    return np.load(out / SAMPLES_FILE)


def test_pipeline_writes_artifacts(pipeline: Dict[str, Path]) -> None:
    assert (pipeline["data"] / RUN_CONFIG_FILE).exists()
    assert (pipeline["run"] / FINAL_CHECKPOINT).is_dir()

    samples = np.load(pipeline["samples"] / SAMPLES_FILE)
    assert samples.shape == (4, 40, 3)
    assert np.all(np.isfinite(samples))
    manifest = json.loads((pipeline["samples"] / SAMPLES_MANIFEST).read_text(encoding="utf-8"))
    assert manifest["label"] == "1.10.8"
    assert manifest["n_samples"] == 4
    assert len(manifest["files"]) == 4
    assert all((pipeline["samples"] / name).exists() for name in manifest["files"])
    assert (pipeline["classifier"] / "classifier").is_dir()


def test_eval_writes_finite_report(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    scrmsd = tmp_path / "scrmsd.txt"
    np.savetxt(scrmsd, [1.0, 3.0, 0.5, 2.5])
    out = tmp_path / "eval"
    code = main([
        "eval", "--samples", str(pipeline["samples"]), "--reference", str(pipeline["data"]),
        "--classifier", str(pipeline["classifier"] / "classifier"), "--scrmsd", str(scrmsd), "--out", str(out),
    ])
    assert code == EXIT_OK

    report = StructureSetReport.model_validate_json((out / REPORT_FILE).read_text(encoding="utf-8"))
    assert report.n_samples == 4
    assert report.designable_fraction == pytest.approx(0.5)
    assert report_is_finite(report)
    assert set(pd.read_csv(out / METRICS_CSV).columns) == {"metric", "level", "value"}
    assert (out / LENGTHS_CSV).exists()


def test_reclass_uses_manifest_label(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    out = tmp_path / "reclass"
    code = main([
        "reclass", "--samples", str(pipeline["samples"]),
        "--classifier", str(pipeline["classifier"] / "classifier"), "--out", str(out),
    ])
    assert code == EXIT_OK
    document = json.loads((out / RECLASS_FILE).read_text(encoding="utf-8"))
    assert document["label"] == "1.10.8"
    assert document["level"] == "T"
    assert document["n_scored"] == 4
    assert 0.0 <= document["mean_probability"] <= 1.0


def test_equiv_writes_table(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    out = tmp_path / "equiv"
    code = main([
        "equiv", "--checkpoint", str(pipeline["run"] / FINAL_CHECKPOINT), "--dataset", str(pipeline["data"]),
        "--out", str(out), "--n-mc", "2", "--t-grid", "0.5",
    ])
    assert code == EXIT_OK
    frame = pd.read_csv(out / EQUIVARIANCE_CSV)
    assert list(frame["t"]) == [0.5]
    assert np.all(np.isfinite(frame.to_numpy()))


def test_same_seed_gives_same_samples(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    checkpoint = pipeline["run"] / FINAL_CHECKPOINT
    first = _sample(checkpoint, tmp_path / "a", "--seed", "5")
    second = _sample(checkpoint, tmp_path / "b", "--seed", "5")
    other = _sample(checkpoint, tmp_path / "c", "--seed", "6")
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_ode_flag_matches_zero_schedule(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    checkpoint = pipeline["run"] / FINAL_CHECKPOINT
    ode = _sample(checkpoint, tmp_path / "ode", "--ode", "--seed", "2")
    zero = _sample(checkpoint, tmp_path / "zero", "--gt", "zero", "--gamma", "0", "--seed", "2")
    assert np.array_equal(ode, zero)


def test_exit_codes(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    checkpoint = str(pipeline["run"] / FINAL_CHECKPOINT)
    assert main(["sample", "--checkpoint", checkpoint, "--out", str(tmp_path), "--bogus"]) == EXIT_USAGE
    assert main(["sample", "--checkpoint", str(tmp_path / "missing"), "--out", str(tmp_path)]) == EXIT_MISSING
    assert main(["sample", "--checkpoint", checkpoint, "--out", str(tmp_path), "--gamma", "-1"]) == EXIT_CONFIG
    assert main(["eval", "--samples", str(tmp_path / "none"), "--reference", str(pipeline["data"]),
                 "--classifier", checkpoint]) == EXIT_MISSING


def test_unit_guidance_is_plain_conditional_sampling(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    checkpoint = pipeline["run"] / FINAL_CHECKPOINT
    plain = _sample(checkpoint, tmp_path / "plain", "--label", "2.30.30", "--seed", "4")
    guided = _sample(checkpoint, tmp_path / "guided", "--label", "2.30.30", "--omega", "1", "--alpha", "0", "--seed", "4")
    assert np.array_equal(plain, guided)


def test_eval_rerun_is_reproducible(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    argv = [
        "eval", "--samples", str(pipeline["samples"]), "--reference", str(pipeline["data"]),
        "--classifier", str(pipeline["classifier"] / "classifier"),
    ]
    assert main([*argv, "--out", str(tmp_path / "first")]) == EXIT_OK
    assert main([*argv, "--out", str(tmp_path / "second")]) == EXIT_OK
    first = (tmp_path / "first" / REPORT_FILE).read_bytes()
    assert first == (tmp_path / "second" / REPORT_FILE).read_bytes()


def test_eval_and_reclass_keep_the_sampling_config(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    samples_dir = tmp_path / "guided"
    _sample(pipeline["run"] / FINAL_CHECKPOINT, samples_dir, "--label", "1.10.8", "--omega", "2", "--length", "40")
    before = (samples_dir / RUN_CONFIG_FILE).read_bytes()
    classifier = str(pipeline["classifier"] / "classifier")

    assert main(["eval", "--samples", str(samples_dir), "--reference", str(pipeline["data"]),
                 "--classifier", classifier]) == EXIT_OK
    assert main(["reclass", "--samples", str(samples_dir), "--classifier", classifier]) == EXIT_OK

    assert (samples_dir / RUN_CONFIG_FILE).read_bytes() == before
    assert RunConfig.load(samples_dir / RUN_CONFIG_FILE).guidance.omega == 2.0
    assert (samples_dir / EVAL_CONFIG_FILE).exists()
    assert (samples_dir / RECLASS_CONFIG_FILE).exists()
    assert (samples_dir / REPORT_FILE).exists()


def test_scrmsd_count_must_match_samples(pipeline: Dict[str, Path], tmp_path: Path) -> None:
    argv = [
        "eval", "--samples", str(pipeline["samples"]), "--reference", str(pipeline["data"]),
        "--classifier", str(pipeline["classifier"] / "classifier"), "--out", str(tmp_path / "eval"),
    ]
    longer = tmp_path / "longer.txt"
    np.savetxt(longer, [1.0, 3.0, 0.5, 2.5, 1.5])
    shorter = tmp_path / "shorter.txt"
    np.savetxt(shorter, [1.0, 3.0])
    assert main([*argv, "--scrmsd", str(longer)]) == EXIT_USAGE
    assert main([*argv, "--scrmsd", str(shorter)]) == EXIT_USAGE
    assert not (tmp_path / "eval" / REPORT_FILE).exists()
