#!/usr/bin/env python3
"""
Acceptance Runner

Runs all or some of the acceptance checks and prints a summary table,
optionally saving the JSON report.
"""

import argparse
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app.logging_config import configure_logging  # noqa: E402
from app.services.acceptance import DEFAULT_SEED, AcceptanceSuite  # noqa: E402
from app.services.exporters import write_json  # noqa: E402
from app.services.replica_pool import ReplicaPool  # noqa: E402


def list_checks():
    suite = AcceptanceSuite(quick=True)
    print("Available checks:")
    for name, _ in suite.checks:
        print(f"  - {name}")


def run_checks(seed, quick, only, workers, report):
    suite = AcceptanceSuite(seed=seed, quick=quick, pool=ReplicaPool(workers=workers))
    unknown = sorted(set(only or []) - {name for name, _ in suite.checks})
    if unknown:
        print(f"❌ Unknown checks: {', '.join(unknown)} (see --list)")
        return False
    mode = "quick" if quick else "full"
    print(f"🔍 Running {mode} acceptance checks (seed {seed})...")
    results = suite.run(only=only)

    print(f"\n{'Check':<36} {'Result':<8} {'Seconds':>9}")
    print("-" * 56)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.name:<36} {status:<8} {result.duration_s:>9.1f}")
        if result.error:
            print(f"   error: {result.error}")

    if report:
        write_json([r.model_dump(mode="json") for r in results], report)
        print(f"\n📄 Report written to {report}")

    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"\n❌ {len(failed)} of {len(results)} checks failed")
        return False
    print(f"\n✅ All {len(results)} checks passed")
    return True


def main():
    parser = argparse.ArgumentParser(description="Jamming RTP acceptance runner")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--quick", action="store_true", help="Reduced Monte Carlo budgets")
    parser.add_argument("--only", nargs="*", default=None, help="Run only these checks")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--report", default=None, help="Write the JSON report here")
    parser.add_argument("--list", action="store_true", help="List check names and exit")
    args = parser.parse_args()

    configure_logging("WARNING")
    if args.list:
        list_checks()
        return
    ok = run_checks(args.seed, args.quick, args.only, args.workers, args.report)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
