#!/usr/bin/env python
"""
Initialize the results store for the lattice workbench.
Run this script to create the runs and reduction-cache tables.
"""

import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src import database as db


def main():
    if not db.is_enabled():
        print("Results store is disabled (LDSLAB_DB_PATH is empty).")
        return

    print("Initializing ldslab results store...")
    db.init_database()
    print("Store schema created.")

    stats = db.get_store_stats()
    print(f"Recorded runs: {stats['total_runs']} ({stats['failed_runs']} failed)")
    print(f"Cached reductions: {stats['cached_reductions']}")

    print(f"\nStore location: {db.DB_PATH}")


if __name__ == '__main__':
    main()
