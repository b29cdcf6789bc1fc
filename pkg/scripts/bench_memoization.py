#!/usr/bin/env python3
"""Compare block expansions with and without memoized search on the
shared-subtree fixture: the counters behind the work-sharing claim."""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from crossinspect.detect import (                          # noqa: E402
    detect_indicators, entry_blocks, find_paths_parallel, find_paths_serial)
from crossinspect.graphs import build_all                  # noqa: E402
from crossinspect.ir import parse_ir                       # noqa: E402


def main():
    universe = parse_ir((REPO / "fixtures" / "fig7.ir").read_text())
    _, icfg, *_ = build_all(universe)
    indicators = detect_indicators(universe)
    entries = entry_blocks(universe)

    serial_paths, serial, _ = find_paths_serial(universe, icfg, entries, indicators)
    par_paths, par, _ = find_paths_parallel(universe, icfg, entries, indicators)

    assert {p.blocks for p in serial_paths} == {p.blocks for p in par_paths}
    print(f"paths found            : {len(par_paths)}")
    print(f"expansions, serial     : {serial.expansions}")
    print(f"expansions, memoized   : {par.expansions}")
    print(f"memo hits              : {par.memo_hits}")
    print(f"memo publishes         : {par.memo_publishes}")
    print(f"reduction              : "
          f"{100 * (1 - par.expansions / serial.expansions):.1f}%")
    print("\nper-block expansions in the shared helper (memoized run):")
    for i in range(6):
        block = f"Par.g.b{i}"
        print(f"  {block}: {par.expansions_by_block.get(block, 0)}")


if __name__ == "__main__":
    main()
