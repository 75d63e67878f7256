"""Straight-line reference kernel: one stage at a time through VDM, using
registers v0-v7 only, with no regard for the pipelines it runs on."""

from __future__ import annotations

from ..isa import VLEN, Opcode, Program
from . import emit
from .plan import NttPlan


def gen_naive(p: NttPlan) -> Program:
    code = emit.prologue(p)
    k = p.stages
    half = p.butterflies_per_stage
    forward = p.direction == "forward"
    for s in range(k):
        src = emit.buffer_reg(s)
        dst = emit.buffer_reg(s + 1)
        last = s == k - 1
        for v in range(half):
            if forward:
                code += [
                    emit.vload(0, src, v * VLEN),
                    emit.vload(1, src, (v + half) * VLEN),
                    emit.twiddle_load(2, p.twiddle_ref(s, v)),
                    emit.bfly(3, 4, 0, 1, 2),
                    emit.shuffle(Opcode.UNPKLO, 5, 3, 4),
                    emit.shuffle(Opcode.UNPKHI, 6, 3, 4),
                    emit.vstore(5, dst, 2 * v * VLEN),
                    emit.vstore(6, dst, (2 * v + 1) * VLEN),
                ]
            else:
                code += [
                    emit.vload(0, src, 2 * v * VLEN),
                    emit.vload(1, src, (2 * v + 1) * VLEN),
                    emit.shuffle(Opcode.PKLO, 5, 0, 1),
                    emit.shuffle(Opcode.PKHI, 6, 0, 1),
                    emit.twiddle_load(2, p.twiddle_ref(s, v)),
                    emit.bfly(3, 4, 5, 6, 2),
                ]
                if last:
                    code += [emit.scale(3, 3), emit.scale(4, 4)]
                code += [
                    emit.vstore(3, dst, v * VLEN),
                    emit.vstore(4, dst, (v + half) * VLEN),
                ]
    return Program(tuple(code))
