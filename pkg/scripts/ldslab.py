#!/usr/bin/env python
"""
Command-line entry point for the lattice workbench.
Equivalent to `python -m src.cli`.
"""

import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli import main

if __name__ == '__main__':
    sys.exit(main())
