#!/usr/bin/env python
"""
Run the full cross-module identity suite.
Includes the per-bond compatibility check, which the CLI default suite skips.
"""

import sys
import os
import time
import logging

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src import database as db
from src.verification import SUITE, run_suite

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def run_full_verification():
    """Run every registered check and print a summary table."""
    print("=" * 70)
    print("LATTICE WORKBENCH IDENTITY SUITE")
    print("=" * 70)

    names = list(SUITE)
    print(f"\nChecks: {len(names)}")
    print("The oracle comparisons may take a few minutes...\n")

    results = []
    for i, name in enumerate(names):
        print(f"[{i+1}/{len(names)}] {name}")
        started = time.time()
        result = run_suite([name])[0]
        elapsed = time.time() - started
        status = 'pass' if result.passed else 'FAIL'
        print(f"    {status}: deviation {result.deviation:.3g} (tolerance {result.tolerance:.3g}), {elapsed:.1f}s")
        if 'error' in result.detail:
            print(f"    error: {result.detail['error']}")
        results.append(result)

    failed = [r.name for r in results if not r.passed]
    print("\n" + "=" * 70)
    print("VERIFICATION COMPLETE")
    print(f"Passed: {len(results) - len(failed)}/{len(results)}")
    if failed:
        print(f"Failed: {', '.join(failed)}")
    print("=" * 70)

    db.record_run('verify', {'checks': ','.join(names)}, {'rows': [r.as_dict() for r in results]},
                  4 if failed else 0)
    return results


if __name__ == '__main__':
    outcome = run_full_verification()
    sys.exit(0 if all(r.passed for r in outcome) else 4)
