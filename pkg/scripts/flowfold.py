#!/usr/bin/env python3
"""Run the FlowFold command line from a repo checkout.

Usage:
    python scripts/flowfold.py toydata --out data/toy
    python scripts/flowfold.py train --dataset data/toy --out runs/base --steps 500

See `apps/flow/cli.py` for every subcommand and the exit codes.
"""

import sys
from pathlib import Path

# Make `apps.flow.*` and `libs.structures.*` importable when run from the repo root.
REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT))

from apps.flow.cli import main  # noqa: E402

if __name__ == "__main__":
    raise SystemExit(main())
