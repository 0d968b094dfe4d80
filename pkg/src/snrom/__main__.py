"""Module entry point: ``python -m snrom`` runs the workbench CLI."""

import sys

from .workbench.cli import main

if __name__ == "__main__":
    sys.exit(main())
