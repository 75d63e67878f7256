"""How the optimized 64K kernel responds to pipeline parameters.

The kernel is generated once for the default (128 HPLEs, 128 banks) machine;
only the simulated machine changes.
"""

from b512 import nttgen
from b512.perfsim import MachineConfig, simulate

AXES = {
    "mult_ii": (1, 2, 4),
    "mult_latency": (4, 6, 8, 10, 12),
    "ls_latency": (4, 7, 10),
    "shuffle_latency": (4, 7),
}


def main() -> None:
    prog = nttgen.generate(nttgen.plan(65536, bits=128))
    base = simulate(prog).total_cycles
    print(f"baseline: {base} cycles")
    for field, values in AXES.items():
        cells = []
        for v in values:
            c = simulate(prog, MachineConfig(**{field: v})).total_cycles
            cells.append(f"{v}: {c} ({c / base - 1:+.1%})")
        print(f"{field:>16}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
