"""Generate a forward NTT kernel, check it against the reference transform,
then time naive and optimized versions on the default machine.

    python demos/ntt_end_to_end.py [n]
"""

import sys

from b512 import nttgen
from b512.oracle import verify_program
from b512.perfsim import MachineConfig, report, simulate


def main(n: int = 4096) -> None:
    cfg = MachineConfig()
    results = {}
    for strategy in ("naive", "optimized"):
        p = nttgen.plan(n, bits=128, strategy=strategy)
        prog = nttgen.generate(p)
        check = verify_program(prog, p, trials=1, sample=None if n <= 4096 else 128)
        stats = simulate(prog, cfg)
        results[strategy] = stats.total_cycles
        census = nttgen.instruction_census(prog)
        print(f"{strategy:>9}: {census['total']:5d} instructions "
              f"(CI {census['CI']}, SI {census['SI']}, LSI {census['LSI']}), "
              f"{stats.total_cycles} cycles, {'verified' if check.passed else 'MISMATCH'}")
    print(f"speedup: {results['naive'] / results['optimized']:.2f}x")
    print()
    print(report(results["optimized"], cfg, n).table())


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 4096)
