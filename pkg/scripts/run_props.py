#!/usr/bin/env python3
"""Run the full invariant suite on the shipped point-source config."""

import sys
from pathlib import Path

from nclab.harness.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "props.toml"

if __name__ == "__main__":
    sys.exit(main(["props", str(CONFIG), *sys.argv[1:]]))
