"""Linear-scan allocation of virtual vectors onto the 64 vector registers.

Values are visited in IR order.  When no register is free the value whose
next use lies furthest ahead is evicted.  A value that still has a valid
copy in memory (its load source, or the location it was stored to) is simply
dropped and reloaded later; anything else is spilled to the scratch region.
Free registers are handed out least-recently-freed first, avoiding VRF
memories (index mod 16) that nearby instructions of other classes touch.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass

from ..isa import VLEN, AddressMode, CONTIGUOUS, Instruction, Opcode, OpClass
from .ir import IROp
from .plan import A_SCRATCH, M_Q, S_NINV

INF = float("inf")
VRF_MEMORIES = 16


class AllocationError(RuntimeError):
    pass


@dataclass
class PhysOp:
    instr: Instruction
    origin: str           # "ir", "reload" or "spill"
    blocks: tuple[int, ...] = ()   # VDM vector blocks touched (loads/stores)
    keep: bool = True


@dataclass
class _Home:
    opcode: Opcode        # VLOAD or VBCAST
    areg: int
    offset: int
    mode: AddressMode
    blocks: tuple[int, ...]
    versions: tuple[int, ...]


def access_blocks(abs_addr: int, mode: AddressMode) -> tuple[int, ...]:
    from ..isa import pattern_extent
    first = abs_addr - abs_addr % VLEN
    last = abs_addr + pattern_extent(mode) - 1
    return tuple(range(first, last - last % VLEN + 1, VLEN))


def to_instruction(op: IROp, regs: list[int]) -> Instruction:
    """``regs`` lists physical registers for dst values then src values."""
    oc = op.opcode
    nd = len(op.dst)
    d, s = regs[:nd], regs[nd:]
    if oc is Opcode.VLOAD:
        return Instruction(oc, vd=d[0], addr_reg=op.areg, address=op.offset, addr_mode=op.mode)
    if oc is Opcode.VSTORE:
        return Instruction(oc, vd=s[0], addr_reg=op.areg, address=op.offset, addr_mode=op.mode)
    if oc is Opcode.VBCAST:
        return Instruction(oc, vd=d[0], addr_reg=op.areg, address=op.offset)
    if oc is Opcode.BFLY:
        return Instruction(oc, vd=d[0], vd1=d[1], vs=s[0], vt=s[1], vt1=s[2], rm=M_Q)
    if oc is Opcode.VMULS:
        return Instruction(oc, vd=d[0], vs=s[0], rt=S_NINV, rm=M_Q)
    if oc.op_class is OpClass.CI:
        return Instruction(oc, vd=d[0], vs=s[0], vt=s[1], rm=M_Q)
    return Instruction(oc, vd=d[0], vs=s[0], vt=s[1])


def _mask(regs) -> int:
    m = 0
    for r in regs:
        m |= 1 << (r % VRF_MEMORIES)
    return m


def allocate(ops: list[IROp], abs_address, num_regs: int = 64, scratch_slots: int = 96,
             spill_weight: float = 0.5, lookback: int = 6, timing=None) -> list[PhysOp]:
    """Map ``ops`` onto physical registers; ``abs_address(areg, offset)`` resolves
    the VDM address of a memory operand.

    ``timing`` optionally gives predicted slots (dispatch, start, complete,
    pipe) per op.  Free registers are then chosen so the write does not wait
    on earlier readers and so the register's VRF memory is not in use by
    another pipeline at the predicted times."""
    uses: dict[int, deque] = defaultdict(deque)
    for pos, op in enumerate(ops):
        for v in op.src:
            uses[v].append(pos)

    reg_of: dict[int, int] = {}
    holder = [-1] * num_regs
    freed_at = [-num_regs + r for r in range(num_regs)]
    homes: dict[int, _Home] = {}
    version: dict[int, int] = defaultdict(int)
    slot_of: dict[int, int] = {}
    free_slots = list(range(scratch_slots - 1, -1, -1))
    recent: deque = deque(maxlen=lookback)
    out: list[PhysOp] = []
    ready_at = [0] * num_regs
    mem_spans: list[deque] = [deque(maxlen=12) for _ in range(VRF_MEMORIES)]

    def overlap(r: int, pos: int, v_uses) -> int:
        n = 0
        for q in (pos, *v_uses):
            t = timing[q]
            for s0, e0, pp in mem_spans[r % VRF_MEMORIES]:
                if pp != t.pipe and s0 < t.complete and t.start < e0:
                    n += 1
        return n

    def touch(regs, pos: int) -> None:
        t = timing[pos]
        for r in regs:
            if t.complete > ready_at[r]:
                ready_at[r] = t.complete
        for m in {r % VRF_MEMORIES for r in regs}:
            mem_spans[m].append((t.start, t.complete, t.pipe))

    def home_valid(v: int) -> bool:
        h = homes.get(v)
        return h is not None and all(version[b] == x for b, x in zip(h.blocks, h.versions))

    def set_home(v: int, opcode: Opcode, areg: int, offset: int, mode: AddressMode) -> None:
        if opcode is Opcode.VBCAST:
            homes[v] = _Home(opcode, areg, offset, CONTIGUOUS, (), ())
            return
        blocks = access_blocks(abs_address(areg, offset), mode)
        homes[v] = _Home(opcode, areg, offset, mode, blocks, tuple(version[b] for b in blocks))

    def emit(instr: Instruction, origin: str, blocks=(), keep=True) -> None:
        out.append(PhysOp(instr, origin, blocks, keep))
        regs = instr.vector_reads() + instr.vector_writes()
        recent.append((instr.op_class, _mask(regs)))

    def store_to(v: int, r: int, areg: int, offset: int, mode: AddressMode, origin: str, keep: bool) -> None:
        blocks = access_blocks(abs_address(areg, offset), mode)
        emit(Instruction(Opcode.VSTORE, vd=r, addr_reg=areg, address=offset, addr_mode=mode),
             origin, blocks, keep)
        for b in blocks:
            version[b] += 1
        if mode == CONTIGUOUS:
            set_home(v, Opcode.VLOAD, areg, offset, mode)

    def release(v: int, pos: int) -> None:
        r = reg_of.pop(v)
        holder[r] = -1
        freed_at[r] = pos

    def pick(exclude: set[int], cls: OpClass, pos: int, v: int | None = None) -> int:
        free = [r for r in range(num_regs) if holder[r] < 0 and r not in exclude]
        if free and timing is not None:
            t = timing[pos].dispatch
            v_uses = tuple(uses[v])[:2] if v is not None else ()
            return min(free, key=lambda r: (ready_at[r] > t, overlap(r, pos, v_uses), freed_at[r]))
        if free:
            busy = 0
            for c, m in recent:
                if c is not cls:
                    busy |= m
            return min(free, key=lambda r: ((busy >> (r % VRF_MEMORIES)) & 1, freed_at[r]))
        best, best_score = -1, -INF
        for r in range(num_regs):
            if r in exclude:
                continue
            v = holder[r]
            q = uses[v]
            dist = (q[0] - pos) if q else INF
            score = dist if home_valid(v) else dist * spill_weight
            if score > best_score:
                best, best_score = r, score
        if best < 0:
            raise AllocationError(f"no register available at IR position {pos}")
        v = holder[best]
        if uses[v] and not home_valid(v):
            if not free_slots:
                raise AllocationError("scratch region exhausted while spilling")
            slot = free_slots.pop()
            slot_of[v] = slot
            store_to(v, best, A_SCRATCH, slot * VLEN, CONTIGUOUS, "spill", True)
        release(v, pos)
        return best

    def retire(v: int) -> None:
        slot = slot_of.pop(v, None)
        if slot is not None:
            free_slots.append(slot)
        homes.pop(v, None)

    for pos, op in enumerate(ops):
        cls = op.opcode.op_class
        pinned = {reg_of[v] for v in op.src if v in reg_of}
        for v in op.src:
            if v in reg_of:
                continue
            if not home_valid(v):
                raise AllocationError(f"value {v} lost: not in a register and no valid memory copy")
            h = homes[v]
            r = pick(pinned, OpClass.LSI, pos)
            if h.opcode is Opcode.VBCAST:
                instr = Instruction(Opcode.VBCAST, vd=r, addr_reg=h.areg, address=h.offset)
                emit(instr, "reload")
            else:
                instr = Instruction(Opcode.VLOAD, vd=r, addr_reg=h.areg, address=h.offset, addr_mode=h.mode)
                emit(instr, "reload", h.blocks)
            reg_of[v] = r
            holder[r] = v
            pinned.add(r)
        src_regs = [reg_of[v] for v in op.src]
        for v in op.src:
            uses[v].popleft()
        for v in set(op.src):
            if not uses[v]:
                release(v, pos)
                retire(v)
        taken = {reg_of[v] for v in op.src if v in reg_of}
        dst_regs = []
        for v in op.dst:
            r = pick(taken | set(dst_regs), cls, pos, v)
            dst_regs.append(r)
        for v, r in zip(op.dst, dst_regs):
            reg_of[v] = r
            holder[r] = v
        instr = to_instruction(op, dst_regs + src_regs)
        if op.opcode is Opcode.VSTORE:
            store_to(op.src[0], src_regs[0], op.areg, op.offset, op.mode, "ir", op.keep)
        elif op.opcode is Opcode.VLOAD:
            emit(instr, "ir", access_blocks(abs_address(op.areg, op.offset), op.mode))
            set_home(op.dst[0], Opcode.VLOAD, op.areg, op.offset, op.mode)
        else:
            emit(instr, "ir")
            if op.opcode is Opcode.VBCAST:
                set_home(op.dst[0], Opcode.VBCAST, op.areg, op.offset, CONTIGUOUS)
        if timing is not None:
            touch(dst_regs + src_regs, pos)
        for v in op.dst:
            if not uses[v]:
                release(v, pos)
                retire(v)
    return out


def drop_dead_stores(code: list[PhysOp]) -> list[PhysOp]:
    """Remove non-output stores whose blocks are overwritten or never read again."""
    live: set[int] = set()
    keep = [True] * len(code)
    for i in range(len(code) - 1, -1, -1):
        op = code[i]
        oc = op.instr.opcode
        if oc is Opcode.VLOAD:
            live.update(op.blocks)
        elif oc is Opcode.VSTORE:
            if op.keep or any(b in live for b in op.blocks):
                if op.instr.addr_mode == CONTIGUOUS and op.instr.address % VLEN == 0:
                    live.difference_update(op.blocks)
            else:
                keep[i] = False
    return [op for op, k in zip(code, keep) if k]

