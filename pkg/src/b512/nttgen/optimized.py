"""Machine-aware kernel: rectangles, forwarding, allocation, scheduling."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..isa import Program
from ..perfsim import MachineConfig
from . import emit
from .ir import build_ir
from .plan import NttPlan
from .regalloc import allocate, drop_dead_stores
from .scheduler import list_schedule, schedule_ir


@dataclass(frozen=True)
class GenOptions:
    forwarding: bool = False
    interleave: int = 1
    schedule: bool = True
    window: int = 64
    harm_weight: float = 1.0
    num_regs: int = 64
    spill_weight: float = 0.5
    prepass: bool = True
    prepass_window: int = 128
    max_live: int = 60
    # machine the scheduler plans for
    config: MachineConfig = field(default_factory=MachineConfig)


def gen_optimized(p: NttPlan, options: GenOptions | None = None) -> Program:
    opts = options or GenOptions()
    b = build_ir(p, forwarding=opts.forwarding, interleave=opts.interleave)
    ops, timing = b.ops, None
    if opts.prepass:
        order, slots = schedule_ir(ops, b.abs_address, opts.config, opts.prepass_window, opts.max_live)
        ops = [ops[i] for i in order]
        timing = slots
    code = allocate(ops, b.abs_address, num_regs=opts.num_regs, scratch_slots=p.scratch_vectors,
                    spill_weight=opts.spill_weight, timing=timing)
    code = drop_dead_stores(code)
    instrs = emit.prologue(p) + [op.instr for op in code]
    if opts.schedule:
        instrs = list_schedule(instrs, opts.config, opts.window, harm_weight=opts.harm_weight)
    return Program(tuple(instrs))
