"""Build a full 2^24-suffix UUID-E reverse table for a set of OUIs.

Each OUI takes about 16.8M SHA-1 evaluations and 369 MB on disk; parts
are kept per OUI so an interrupted build resumes where it stopped.
"""

from __future__ import annotations

import argparse
import shutil
import sys
import time
from pathlib import Path

from macrand.address import parse_prefix
from macrand.rainbow import RECORD_SIZE, DiskFull, InterruptedBuild, build_rainbow_table


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("ouis", nargs="+", help="e.g. 90:68:C3 00:12:FB")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()
    ouis = [parse_prefix(o) for o in args.ouis]
    need = len(ouis) * (1 << 24) * RECORD_SIZE * 2  # parts plus merged table
    free = shutil.disk_usage(args.out.resolve().parent).free
    if free < need:
        print(f"need about {need / 1e9:.1f} GB free, have {free / 1e9:.1f} GB", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    try:
        table = build_rainbow_table(ouis, args.out, workers=args.workers)
    except InterruptedBuild as e:
        print(f"interrupted; {len(e.done)} OUI part(s) kept in {e.parts_dir}, rerun to resume", file=sys.stderr)
        return 130
    except DiskFull as e:
        print(f"disk full: {e}", file=sys.stderr)
        return 1
    with table:
        table.verify_order()
        print(table.describe())
    print(f"built in {time.perf_counter() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
