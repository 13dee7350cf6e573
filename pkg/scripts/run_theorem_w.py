#!/usr/bin/env python3
"""Run the shrinking-body convergence sweep on both curved configs."""

import sys
from pathlib import Path

from nclab.harness.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    code = 0
    for name in ("harmonic.toml", "point_mass.toml"):
        code |= main(["theorem-w", str(CONFIGS / name), *sys.argv[1:]])
    sys.exit(code)
