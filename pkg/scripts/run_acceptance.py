#!/usr/bin/env python3
"""Run the twelve acceptance checks and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py            # all of them (about 15 minutes on one CPU)
    python3 scripts/run_acceptance.py -k "01 or 09"
"""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", *sys.argv[1:]]))
