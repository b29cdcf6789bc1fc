#!/usr/bin/env python3
"""Run the analyzer over every fixture manifest and print a findings table."""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from crossinspect.manifest import load_manifest            # noqa: E402
from crossinspect.pipeline import run_pipeline             # noqa: E402


def main():
    rows = []
    for manifest_path in sorted((REPO / "fixtures").glob("*.manifest")):
        manifest = load_manifest(manifest_path)
        result = run_pipeline(manifest)
        by_rule = {}
        for f in result.report["findings"]:
            by_rule[f["rule"]] = by_rule.get(f["rule"], 0) + 1
        rows.append((manifest_path.name,
                     sum(by_rule.values()),
                     len(result.report["suppressed"]),
                     ", ".join(f"{r}={n}" for r, n in sorted(by_rule.items()))))

    width = max(len(r[0]) for r in rows)
    print(f"{'manifest':<{width}}  findings  suppressed  breakdown")
    for name, total, suppressed, breakdown in rows:
        print(f"{name:<{width}}  {total:>8}  {suppressed:>10}  {breakdown}")


if __name__ == "__main__":
    main()
