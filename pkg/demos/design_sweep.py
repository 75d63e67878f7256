"""Sweep HPLE and bank counts for one kernel and print the cost/runtime frontier.

    python demos/design_sweep.py [n] [--retarget]

With --retarget the kernel is regenerated for every machine in the grid.
"""

import sys

from b512 import nttgen
from b512.nttgen import GenOptions
from b512.perfsim import sweep


def main(n: int, retarget: bool) -> None:
    p = nttgen.plan(n, bits=128)
    programs = (lambda cfg: nttgen.generate(p, GenOptions(config=cfg))) if retarget else nttgen.generate(p)
    res = sweep(programs, workers=4)
    grid = {(r.hples, r.banks): r for r in res.rows}
    banks = sorted({b for _, b in grid})
    print("runtime (us)   " + "".join(f"{b:>9}" for b in banks) + "  banks")
    for h in sorted({h for h, _ in grid}):
        print(f"{h:>4} HPLEs     " + "".join(f"{grid[h, b].runtime_us:9.2f}" for b in banks))
    print("\nfrontier (proxy cost, runtime):")
    for r in res.frontier:
        print(f"  ({r.hples:3d}, {r.banks:3d})  cost {r.proxy_cost:7.1f}  {r.runtime_us:8.2f} us  {r.bound_by}-bound")
    for e in res.exceptions:
        print(f"  note ({e['hples']}, {e['banks']}): {e['reason']}")


if __name__ == "__main__":
    args = [a for a in sys.argv[1:] if not a.startswith("--")]
    main(int(args[0]) if args else 65536, "--retarget" in sys.argv)
