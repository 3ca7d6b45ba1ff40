"""
main.py

Entry point for running contention-lab from a source checkout.

Usage:
    python main.py analyze --scenario scenarios/closed_baseline.json
    python main.py simulate --scenario scenarios/closed_baseline.json --replications 5
"""

import sys

from contention_lab.cli import main

if __name__ == "__main__":
    sys.exit(main())
