"""Greedy list scheduling of straight-line B512 code.

The scheduler walks a model of the machine: at each step it considers the
ready instructions among the first ``window`` unscheduled ones and picks the
one that can dispatch earliest, breaking ties by class (compute, then
shuffle, then load/store) and then by program order.  The model mirrors the
timing simulator: in-order single dispatch, busyboard hazards, per-pipeline
FIFO queues and VRF memory conflicts against higher-priority pipelines.

It runs twice.  Before allocation it orders the virtual-register IR, where
only true dependences exist, while capping the number of live values.  After
allocation it reorders the physical code, now also bound by register reuse.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from ..isa import Instruction, OpClass, Opcode, Program
from ..perfsim import (
    PIPE_CI, PIPE_LS, PIPE_SI, MachineConfig, effective_bases, instruction_cost, register_keys,
    vector_ls_beats, vrf_memory_mask,
)
from .ir import IROp
from .regalloc import access_blocks

_PIPE = {OpClass.CI: PIPE_CI, OpClass.SI: PIPE_SI, OpClass.LSI: PIPE_LS}


@dataclass
class Slot:
    """Predicted timing of one scheduled operation."""
    dispatch: int
    start: int
    complete: int
    pipe: int
    op: int = -1


def _delay(sp: list[int], shift: int, slots: list[Slot], rkeys, wkeys, rcomp, wcomp) -> None:
    sp[0] += shift
    sp[1] += shift
    slot = slots[sp[3]]
    slot.start += shift
    slot.complete += shift
    for k in wkeys[slot.op]:
        if slot.complete > wcomp[k]:
            wcomp[k] = slot.complete
    for k in rkeys[slot.op]:
        if slot.complete > rcomp[k]:
            rcomp[k] = slot.complete


def _memory_preds(i: int, is_load: bool, blocks, last_store: dict, loads_since: dict, p: set) -> None:
    for b in blocks:
        s = last_store.get(b)
        if s is not None:
            p.add(s)
        if is_load:
            loads_since[b].append(i)
        else:
            p.update(loads_since[b])
            loads_since[b] = []
            last_store[b] = i


def dependence_graph(instrs: list[Instruction], bases: list[int]) -> list[set[int]]:
    """Predecessor sets: register hazards on all files plus VDM block overlap."""
    preds: list[set[int]] = [set() for _ in instrs]
    last_writer: dict[int, int] = {}
    readers: dict[int, list[int]] = defaultdict(list)
    last_store: dict[int, int] = {}
    loads_since: dict[int, list[int]] = defaultdict(list)
    for i, ins in enumerate(instrs):
        p = preds[i]
        reads = register_keys(ins.register_reads())
        writes = register_keys(ins.register_writes())
        for k in reads:
            w = last_writer.get(k)
            if w is not None:
                p.add(w)
        for k in writes:
            w = last_writer.get(k)
            if w is not None:
                p.add(w)
            p.update(readers[k])
        for k in reads:
            readers[k].append(i)
        for k in writes:
            last_writer[k] = i
            readers[k] = []
        op = ins.opcode
        if op is Opcode.VLOAD or op is Opcode.VSTORE:
            _memory_preds(i, op is Opcode.VLOAD, access_blocks(bases[i], ins.addr_mode),
                          last_store, loads_since, p)
        p.discard(i)
    return preds


class _Pressure:
    """Live-value accounting for SSA code."""

    def __init__(self, reads: list[tuple[int, ...]], writes: list[tuple[int, ...]], limit: int):
        self.remaining: dict[int, int] = defaultdict(int)
        for r in reads:
            for v in r:
                self.remaining[v] += 1
        self.reads, self.writes, self.limit = reads, writes, limit
        self.live = 0

    def delta(self, i: int) -> int:
        d = len(self.writes[i])
        for v in set(self.reads[i]):
            if self.remaining[v] == self.reads[i].count(v):
                d -= 1
        return d

    def commit(self, i: int) -> None:
        self.live += self.delta(i)
        for v in self.reads[i]:
            self.remaining[v] -= 1
        for v in self.writes[i]:
            if self.remaining[v] == 0:
                self.live -= 1


def _vrf_start(start: int, beats: int, mask: int, p: int, spans) -> int:
    moved = True
    while moved:
        moved = False
        for hp in range(p):
            for sp in spans[hp]:
                if sp[2] & mask and sp[0] < start + beats and start < sp[1]:
                    start = sp[1]
                    moved = True
    return start


def _harm(i: int, t: int, p: int, beats: int, mask: int, pipe_free, spans, weight: float) -> float:
    """Cycles lost to VRF conflicts if ``i`` is placed now: its own delay plus
    the cycles it steals from lower-priority work in flight."""
    if not mask or not weight:
        return 0
    s0 = max(t, pipe_free[p])
    start = _vrf_start(s0, beats, mask, p, spans)
    end = start + beats
    lost = start - s0
    for lp in range(p + 1, 3):
        for sp in spans[lp]:
            if sp[2] & mask and sp[0] < end and start < sp[1]:
                lost += min(end, sp[1]) - max(start, sp[0])
                break
    return weight * lost


def greedy_schedule(preds: list[set[int]], pipe: list[int], cost: list[tuple[int, int]],
                    rkeys: list[tuple[int, ...]], wkeys: list[tuple[int, ...]], masks: list[int],
                    config: MachineConfig, window: int = 64,
                    pressure: _Pressure | None = None,
                    harm_weight: float = 1.0) -> tuple[list[int], list[Slot]]:
    n = len(preds)
    succs: list[list[int]] = [[] for _ in range(n)]
    for i, ps in enumerate(preds):
        for j in ps:
            succs[j].append(i)
    npred = [len(ps) for ps in preds]

    depth = config.queue_depth or 1 << 30
    wcomp: dict[int, int] = defaultdict(int)
    rcomp: dict[int, int] = defaultdict(int)
    pipe_free = [0, 0, 0]
    starts: list[list[int]] = [[], [], []]
    spans: list[list[list[int]]] = [[], [], []]   # [start, end, mask, slot index]
    last_dispatch = config.frontend_depth - 1

    pending = list(range(n))
    order: list[int] = []
    slots: list[Slot] = []
    while pending:
        best = None
        best_key = None
        fallback = None
        fallback_key = None
        for i in pending[:window]:
            if npred[i]:
                continue
            p = pipe[i]
            t = last_dispatch + 1
            for k in rkeys[i]:
                if wcomp[k] > t:
                    t = wcomp[k]
            for k in wkeys[i]:
                if wcomp[k] > t:
                    t = wcomp[k]
                if rcomp[k] > t:
                    t = rcomp[k]
            st = starts[p]
            if len(st) >= depth and st[-depth] + 1 > t:
                t = st[-depth] + 1
            key = (t + _harm(i, t, p, cost[i][0], masks[i], pipe_free, spans, harm_weight), p, i)
            if pressure is not None:
                d = pressure.delta(i)
                if d > 0 and pressure.live + d > pressure.limit:
                    fk = (i, key)
                    if fallback_key is None or fk < fallback_key:
                        fallback, fallback_key = i, fk
                    continue
            if best_key is None or key < best_key:
                best, best_key = i, key
        if best is None:
            if fallback is None:
                raise RuntimeError("scheduler found no ready instruction (cyclic dependences)")
            best, best_key = fallback, fallback_key[1]
        i = best
        p = pipe[i]
        t = last_dispatch + 1
        for k in rkeys[i] + wkeys[i]:
            t = max(t, wcomp[k])
        for k in wkeys[i]:
            t = max(t, rcomp[k])
        if len(starts[p]) >= depth:
            t = max(t, starts[p][-depth] + 1)
        beats, lat = cost[i]
        start = max(t, pipe_free[p])
        if masks[i]:
            start = _vrf_start(start, beats, masks[i], p, spans)
        end = start + beats
        if masks[i]:
            # lower-priority work already in flight loses the overlapping cycles
            for lp in range(p + 1, 3):
                shift = 0
                for sp in spans[lp]:
                    if shift:
                        _delay(sp, shift, slots, rkeys, wkeys, rcomp, wcomp)
                    elif sp[2] & masks[i] and sp[0] < end and start < sp[1]:
                        shift = min(end, sp[1]) - max(start, sp[0])
                        _delay(sp, shift, slots, rkeys, wkeys, rcomp, wcomp)
                if shift:
                    pipe_free[lp] += shift
        done = end + lat
        last_dispatch = t
        for k in rkeys[i]:
            if done > rcomp[k]:
                rcomp[k] = done
        for k in wkeys[i]:
            wcomp[k] = done
        pipe_free[p] = end
        starts[p].append(start)
        sp = spans[p]
        sp.append([start, end, masks[i], len(slots)])
        for q in spans:
            while q and q[0][1] <= t:
                del q[0]
        if pressure is not None:
            pressure.commit(i)
        pending.remove(i)
        order.append(i)
        slots.append(Slot(t, start, done, p, i))
        for j in succs[i]:
            npred[j] -= 1
    return order, slots


def list_schedule(instrs: list[Instruction], config: MachineConfig | None = None,
                  window: int = 64, trace: list | None = None,
                  harm_weight: float = 1.0) -> list[Instruction]:
    """Reorder physical code; the result respects every register and memory dependence."""
    config = config or MachineConfig()
    if not instrs:
        return []
    bases = effective_bases(Program(tuple(instrs)))
    preds = dependence_graph(instrs, bases)
    pipe = [_PIPE[ins.op_class] for ins in instrs]
    cost = [instruction_cost(ins, config, bases[i]) for i, ins in enumerate(instrs)]
    rkeys = [register_keys(ins.register_reads()) for ins in instrs]
    wkeys = [register_keys(ins.register_writes()) for ins in instrs]
    masks = [vrf_memory_mask(ins) for ins in instrs]
    order, slots = greedy_schedule(preds, pipe, cost, rkeys, wkeys, masks, config, window,
                                   harm_weight=harm_weight)
    if trace is not None:
        trace.extend(slots)
    return [instrs[i] for i in order]


def ir_cost(op: IROp, abs_address, config: MachineConfig) -> tuple[int, int]:
    if op.opcode in (Opcode.VLOAD, Opcode.VSTORE):
        beats = vector_ls_beats((int(op.mode.mode), op.mode.value), abs_address(op.areg, op.offset), config)
        return beats, config.ls_latency
    return instruction_cost(Instruction(op.opcode), config)


def schedule_ir(ops: list[IROp], abs_address, config: MachineConfig | None = None,
                window: int = 256, max_live: int = 56) -> tuple[list[int], list[Slot]]:
    """Order SSA IR ops for the machine while keeping at most ``max_live`` values live."""
    config = config or MachineConfig()
    preds: list[set[int]] = [set() for _ in ops]
    producer: dict[int, int] = {}
    last_store: dict[int, int] = {}
    loads_since: dict[int, list[int]] = defaultdict(list)
    for i, op in enumerate(ops):
        for v in op.src:
            preds[i].add(producer[v])
        for v in op.dst:
            producer[v] = i
        if op.opcode in (Opcode.VLOAD, Opcode.VSTORE):
            _memory_preds(i, op.opcode is Opcode.VLOAD,
                          access_blocks(abs_address(op.areg, op.offset), op.mode),
                          last_store, loads_since, preds[i])
    pipe = [_PIPE[op.opcode.op_class] for op in ops]
    cost = [ir_cost(op, abs_address, config) for op in ops]
    rkeys = [tuple(op.src) for op in ops]
    wkeys = [tuple(op.dst) for op in ops]
    pressure = _Pressure(rkeys, wkeys, max_live)
    return greedy_schedule(preds, pipe, cost, rkeys, wkeys, [0] * len(ops), config, window, pressure)


def is_valid_order(instrs: list[Instruction], order: list[int]) -> bool:
    """True if ``order`` (a permutation of indices) respects the dependence graph."""
    bases = effective_bases(Program(tuple(instrs)))
    preds = dependence_graph(instrs, bases)
    pos = {i: k for k, i in enumerate(order)}
    return len(pos) == len(instrs) and all(pos[j] < pos[i] for i, ps in enumerate(preds) for j in ps)
