#!/usr/bin/env python3
"""Launcher so the exporter runs straight from a checkout.

Equivalent to the installed ``leafexport`` entry point:

    python3 export.py --backbone alexnet-fc7 --images DIR \
        --out features.featmat --labels labels.csv
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from leafexport.cli import main

if __name__ == "__main__":
    sys.exit(main())
