"""Command-line entry point: ``b512 <subcommand> ...``.

Machine-readable output (JSON, CSV, binary images) is the contract; the human
tables printed alongside are for convenience.  Exit status is 0 on success,
1 when a check fails (verification mismatch) and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import __version__
from .assembler import AssemblyError, assemble, disassemble
from .funcsim import ArchState, Region, SimulationError, load_image, run_program, save_image
from .isa import Program
from .modmath import ParameterError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    pass


def _load_program(path: str) -> Program:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{path}: no such file")
    if p.suffix in (".s", ".asm"):
        return assemble(p.read_text())
    return Program.load(p)


def _load_config(path: str | None):
    from .perfsim import MachineConfig
    return MachineConfig.load(path) if path else MachineConfig()


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ---------------------------------------------------------------------

def cmd_assemble(args) -> int:
    src = Path(args.source)
    if not src.exists():
        raise CliError(f"{args.source}: no such file")
    program = assemble(src.read_text())
    out = Path(args.out or src.with_suffix(".bin"))
    program.save(out)
    print(f"{len(program)} instructions -> {out}")
    return EXIT_OK


def cmd_disasm(args) -> int:
    program = _load_program(args.program)
    _write(args.out, disassemble(program))
    return EXIT_OK


def cmd_run(args) -> int:
    program = _load_program(args.program)
    state = ArchState(vdm_bytes=args.vdm_words * 16, debug=not args.no_debug)
    for path, write in ((args.vdm, state.write_vdm), (args.sdm, state.write_sdm)):
        if path:
            for r in load_image(path):
                write(r.offset, r.values)
    run_program(program, state)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dumps = []
    for spec in args.dump or []:
        name, offset, length = spec.split(":")
        dumps.append(Region(name, int(offset), state.read_vdm(int(offset), int(length))))
    if not dumps:
        used = max((i for i, v in enumerate(state.vdm) if v), default=-1) + 1
        dumps.append(Region("vdm", 0, state.read_vdm(0, used)))
    save_image(out / "vdm.out.img", dumps)
    sdm_used = max((i for i, v in enumerate(state.sdm) if v), default=-1) + 1
    save_image(out / "sdm.out.img", [Region("sdm", 0, state.read_sdm(0, sdm_used))])
    print(f"ran {len(program)} instructions; images written to {out}")
    return EXIT_OK


def cmd_sim(args) -> int:
    from .perfsim import simulate
    program = _load_program(args.program)
    stats = simulate(program, _load_config(args.config))
    _write(args.out, stats.to_json(with_trace=args.trace) + "\n")
    if args.out:
        print(f"{stats.total_cycles} cycles -> {args.out}")
    return EXIT_OK


def _plan_from_args(args):
    from . import nttgen
    q = int(args.q) if getattr(args, "q", None) else None
    return nttgen.plan(args.n, q=q, bits=args.modulus_bits, direction=args.direction,
                       strategy=args.strategy)


def cmd_gen_ntt(args) -> int:
    from . import nttgen
    from .nttgen import GenOptions
    p = _plan_from_args(args)
    program = nttgen.generate(p, GenOptions(config=_load_config(args.config)))
    data = None
    if args.seed is not None:
        rng = random.Random(args.seed)
        data = [rng.randrange(p.params.q.q) for _ in range(p.n)]
    manifest = nttgen.write_kernel(p, program, args.out, data)
    print(json.dumps({"out": str(args.out), "census": manifest["census"], "q": manifest["q"]}))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .nttgen import NttPlan
    from .oracle import verify_program
    program = _load_program(args.program)
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise CliError(f"{args.manifest}: no such file")
    p = NttPlan.from_manifest(manifest)
    rep = verify_program(program, p, trials=args.trials, seed=args.seed, sample=args.sample)
    if args.json:
        print(json.dumps(rep.to_dict(), indent=2))
    else:
        print(rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    from . import nttgen
    from .nttgen import GenOptions
    from .perfsim import parse_grid, sweep
    hples, banks = parse_grid(args.grid)
    p = _plan_from_args(args)
    if args.retarget:
        def program_for(cfg):
            return nttgen.generate(p, GenOptions(config=cfg))
        programs = program_for
    else:
        programs = nttgen.generate(p, GenOptions(config=_load_config(args.config)))
    result = sweep(programs, hples, banks, base=_load_config(args.config), workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "sweep.csv")
    (out / "frontier.json").write_text(result.frontier_json() + "\n")
    print(f"{len(result.rows)} points, {len(result.frontier)} on the frontier, "
          f"{len(result.exceptions)} exception(s) -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .perfsim import CycleStats, report, simulate
    config = _load_config(args.config)
    if args.stats:
        stats = CycleStats.from_dict(json.loads(Path(args.stats).read_text()))
    elif args.program:
        stats = simulate(_load_program(args.program), config)
    else:
        raise CliError("report needs --stats or --program")
    rep = report(stats, config, args.n)
    print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.table())
    return EXIT_OK


# --- parser --------------------------------------------------------------------------

def _add_ntt_flags(sp) -> None:
    sp.add_argument("--n", type=int, required=True, help="transform length (power of two)")
    sp.add_argument("--modulus-bits", type=int, default=128, help="prime size when --q is not given")
    sp.add_argument("--q", help="explicit NTT-friendly prime")
    sp.add_argument("--direction", choices=("forward", "inverse"), default="forward")
    sp.add_argument("--strategy", choices=("naive", "optimized"), default="optimized")
    sp.add_argument("--config", help="machine configuration JSON")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="b512", description="B512 vector ISA toolchain")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("assemble", help="assembly text -> binary program")
    sp.add_argument("source")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_assemble)

    sp = sub.add_parser("disasm", help="binary program -> assembly text")
    sp.add_argument("program")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_disasm)

    sp = sub.add_parser("run", help="execute a program in the functional simulator")
    sp.add_argument("program")
    sp.add_argument("--vdm", help="VDM image (with .manifest)")
    sp.add_argument("--sdm", help="SDM image (with .manifest)")
    sp.add_argument("--vdm-words", type=int, default=1 << 18)
    sp.add_argument("--dump", action="append", metavar="NAME:OFFSET:LENGTH",
                    help="VDM region to write out (repeatable)")
    sp.add_argument("--no-debug", action="store_true", help="skip operand range checks")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sim", help="cycle-level simulation, JSON statistics")
    sp.add_argument("program")
    sp.add_argument("--config")
    sp.add_argument("--trace", action="store_true", help="include per-instruction timestamps")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("gen-ntt", help="generate an NTT kernel with images and manifest")
    _add_ntt_flags(sp)
    sp.add_argument("--seed", type=int, help="also write a random input vector")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_ntt)

    sp = sub.add_parser("verify", help="check a kernel against the reference transform")
    sp.add_argument("program")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--trials", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample", type=int, help="compare only this many points per trial")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="design-space sweep over HPLEs and banks")
    _add_ntt_flags(sp)
    sp.add_argument("--grid", default="hples=4..256,banks=32..256")
    sp.add_argument("--retarget", action="store_true",
                    help="regenerate the kernel for every configuration")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="runtime vs theoretical and HBM overlap")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--stats", help="JSON from 'b512 sim'")
    sp.add_argument("--program", help="simulate this program instead of reading --stats")
    sp.add_argument("--config")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AssemblyError as e:
        print(f"error: {e}", file=sys.stderr)
    except (CliError, ParameterError, SimulationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
