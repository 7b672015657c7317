"""Entrypoint for running with `python -m pofl_sim`."""

import sys

from pofl_sim.cli import main

if __name__ == "__main__":
    sys.exit(main())
