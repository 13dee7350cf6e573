#!/usr/bin/env python3
"""Run the straight-line COM experiment on the flat config."""

import sys
from pathlib import Path

from nclab.harness.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "flat.toml"

if __name__ == "__main__":
    sys.exit(main(["first-law", str(CONFIG), *sys.argv[1:]]))
