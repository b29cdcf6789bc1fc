#!/usr/bin/env python3
"""Taint coverage with and without state dependency edges, per fixture."""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from crossinspect.config import AnalysisConfig            # noqa: E402
from crossinspect.manifest import load_manifest           # noqa: E402
from crossinspect.pipeline import run_pipeline            # noqa: E402


def main():
    rows = []
    for manifest_path in sorted((REPO / "fixtures").glob("*.manifest")):
        manifest = load_manifest(manifest_path)
        full = run_pipeline(manifest, AnalysisConfig())
        bare = run_pipeline(manifest, AnalysisConfig(sd_edges=False))
        rows.append((manifest_path.name,
                     full.report["counters"]["tainted_functions"],
                     bare.report["counters"]["tainted_functions"],
                     full.report["counters"]["tainted_state_vars"],
                     bare.report["counters"]["tainted_state_vars"]))

    print(f"{'manifest':<16} {'fns(SD)':>8} {'fns(noSD)':>10} "
          f"{'vars(SD)':>9} {'vars(noSD)':>11}")
    for name, f_sd, f_no, v_sd, v_no in rows:
        print(f"{name:<16} {f_sd:>8} {f_no:>10} {v_sd:>9} {v_no:>11}")
    mean_sd = sum(r[1] for r in rows) / len(rows)
    mean_no = sum(r[2] for r in rows) / len(rows)
    print(f"\nmean tainted functions: {mean_sd:.2f} with SD edges, "
          f"{mean_no:.2f} without")


if __name__ == "__main__":
    main()
