"""Hardware detection and device selection."""

import json
import logging
import platform
from pathlib import Path

import psutil
import torch

logger = logging.getLogger(__name__)

# Kept beside checkpoints, never inside them: its values differ between identical runs.
HARDWARE_FILE = "hardware.json"


def detect_hardware() -> dict:
    """Detect hardware specs and accelerators visible to torch."""
    system = platform.system()
    machine = platform.machine()
    ram = psutil.virtual_memory()

    mps = bool(getattr(torch.backends, "mps", None) and torch.backends.mps.is_available())
    return {
        "platform": f"{system.lower()}_{machine}",
        "cpu_cores": psutil.cpu_count(logical=False),
        "ram_total_gb": ram.total / (1024**3),
        "ram_available_gb": ram.available / (1024**3),
        "cuda": torch.cuda.is_available(),
        "cuda_devices": torch.cuda.device_count(),
        "mps": mps,
        "torch": torch.__version__,
    }


def write_hardware_log(directory: Path | str) -> Path:
    path = Path(directory) / HARDWARE_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    info = detect_hardware()
    path.write_text(json.dumps(info, indent=2), encoding="utf-8")
    logger.info("Running on %s (cuda=%s, mps=%s)", info["platform"], info["cuda"], info["mps"])
    return path


def select_device(preference: str = "cpu") -> torch.device:
    """Resolve "auto" | "cpu" | "cuda" | "mps" to an available torch device."""
    preference = preference.lower()
    hardware = detect_hardware()
    if preference == "auto":
        if hardware["cuda"]:
            return torch.device("cuda")
        if hardware["mps"]:
            return torch.device("mps")
        return torch.device("cpu")
    if preference == "cuda" and not hardware["cuda"]:
        raise ValueError("CUDA requested but no CUDA device is available")
    if preference == "mps" and not hardware["mps"]:
        raise ValueError("MPS requested but Metal is not available")
    if preference not in ("cpu", "cuda", "mps"):
        raise ValueError(f"Unknown device preference '{preference}'")
    return torch.device(preference)
