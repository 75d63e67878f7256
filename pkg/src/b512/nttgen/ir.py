"""Virtual-register form of an NTT kernel, emitted rectangle by rectangle.

A rectangle of depth d is a set of 2^d vectors that can be carried through d
consecutive stages without touching any other vector.  For the forward
transform the group shares the low (m - d) bits of its vector index (m =
log2(vectors)); for the inverse it shares the high bits.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..isa import VLEN, AddressMode, CONTIGUOUS, Opcode
from . import emit
from .plan import A_BUF0, A_BUF1, A_SCRATCH, A_TWIDDLE, A_ZERO, NttPlan


@dataclass
class IROp:
    opcode: Opcode
    dst: tuple[int, ...] = ()
    src: tuple[int, ...] = ()
    areg: int = 0
    offset: int = 0
    mode: AddressMode = CONTIGUOUS
    keep: bool = False      # store whose result is a kernel output


def rectangle_groups(vector_bits: int, depth: int, forward: bool) -> list[list[int]]:
    """Vector index sets of the rectangles covering one pass of ``depth`` stages."""
    m = vector_bits
    if depth >= m:
        return [list(range(1 << m))]
    free = m - depth
    if forward:
        return [[(f << free) | c for f in range(1 << depth)] for c in range(1 << free)]
    return [[(c << depth) | f for f in range(1 << depth)] for c in range(1 << free)]


class IRBuilder:
    def __init__(self, plan: NttPlan, forwarding: bool = True):
        self.plan = plan
        self.forwarding = forwarding
        self.ops: list[IROp] = []
        self.values = 0
        self._memory: dict[int, int] = {}   # absolute vector address -> value stored there
        self.forwarded = 0

    def abs_address(self, areg: int, offset: int) -> int:
        p = self.plan
        base = {A_ZERO: 0, A_BUF0: p.buffer_base(0), A_BUF1: p.buffer_base(1),
                A_TWIDDLE: p.twiddle_base, A_SCRATCH: p.scratch_base}[areg]
        return base + offset

    def _new(self) -> int:
        self.values += 1
        return self.values - 1

    def load(self, areg: int, offset: int, mode: AddressMode = CONTIGUOUS) -> int:
        addr = self.abs_address(areg, offset)
        if self.forwarding and mode == CONTIGUOUS and addr in self._memory:
            self.forwarded += 1
            return self._memory[addr]
        v = self._new()
        self.ops.append(IROp(Opcode.VLOAD, dst=(v,), areg=areg, offset=offset, mode=mode))
        return v

    def broadcast(self, sdm_offset: int) -> int:
        v = self._new()
        self.ops.append(IROp(Opcode.VBCAST, dst=(v,), areg=A_ZERO, offset=sdm_offset))
        return v

    def store(self, value: int, areg: int, offset: int, mode: AddressMode = CONTIGUOUS,
              keep: bool = False) -> None:
        self.ops.append(IROp(Opcode.VSTORE, src=(value,), areg=areg, offset=offset, mode=mode, keep=keep))
        addr = self.abs_address(areg, offset)
        block = addr - addr % VLEN
        for b in (block, block + VLEN):
            self._memory.pop(b, None)
        if mode == CONTIGUOUS and addr % VLEN == 0:
            self._memory[addr] = value

    def op(self, opcode: Opcode, src: tuple[int, ...], ndst: int = 1) -> tuple[int, ...]:
        dst = tuple(self._new() for _ in range(ndst))
        self.ops.append(IROp(opcode, dst=dst, src=src))
        return dst


def build_ir(plan: NttPlan, forwarding: bool = True, interleave: int = 1) -> IRBuilder:
    b = IRBuilder(plan, forwarding)
    k = plan.stages
    half = plan.butterflies_per_stage
    forward = plan.direction == "forward"
    last_pass = len(plan.passes) - 1
    for pi, (s0, s1) in enumerate(plan.passes):
        src = emit.buffer_reg(pi)
        dst = emit.buffer_reg(pi + 1)
        twiddles: dict = {}

        def twiddle(s: int, v: int) -> int:
            ref = plan.twiddle_ref(s, v)
            if ref not in twiddles:
                if ref.kind == "bcast":
                    twiddles[ref] = b.broadcast(ref.offset)
                else:
                    twiddles[ref] = b.load(A_TWIDDLE, ref.offset, ref.mode)
            return twiddles[ref]

        groups = rectangle_groups(plan.vector_bits, s1 - s0, forward)
        for g0 in range(0, len(groups), interleave):
            batch = groups[g0:g0 + interleave]
            twiddles.clear()
            curs = []
            for group in batch:
                if forward or s0 > 0:
                    curs.append({v: b.load(src, v * VLEN) for v in group})
                else:
                    curs.append(None)
            for s in range(s0, s1):
                for gi, group in enumerate(batch):
                    cur = curs[gi]
                    nxt: dict[int, int] = {}
                    if forward:
                        for v in sorted(x for x in cur if x < half):
                            u, lo = b.op(Opcode.BFLY, (cur[v], cur[v + half], twiddle(s, v)), 2)
                            if s == k - 1:
                                b.store(u, dst, 2 * v * VLEN, emit.STRIDE2, keep=True)
                                b.store(lo, dst, 2 * v * VLEN + 1, emit.STRIDE2, keep=True)
                            else:
                                nxt[2 * v] = b.op(Opcode.UNPKLO, (u, lo))[0]
                                nxt[2 * v + 1] = b.op(Opcode.UNPKHI, (u, lo))[0]
                    else:
                        for v in sorted({x // 2 for x in (group if cur is None else cur)}):
                            if cur is None:
                                a = b.load(src, 2 * v * VLEN, emit.STRIDE2)
                                c = b.load(src, 2 * v * VLEN + 1, emit.STRIDE2)
                            else:
                                a = b.op(Opcode.PKLO, (cur[2 * v], cur[2 * v + 1]))[0]
                                c = b.op(Opcode.PKHI, (cur[2 * v], cur[2 * v + 1]))[0]
                            u, lo = b.op(Opcode.BFLY, (a, c, twiddle(s, v)), 2)
                            if s == k - 1:
                                u = b.op(Opcode.VMULS, (u,))[0]
                                lo = b.op(Opcode.VMULS, (lo,))[0]
                            nxt[v] = u
                            nxt[v + half] = lo
                    curs[gi] = nxt
            for cur in curs:
                for v in sorted(cur):
                    b.store(cur[v], dst, v * VLEN, keep=pi == last_pass)
    return b
