"""Cycle-level timing model of the Ring Processing Unit.

Timing contract
---------------
* The frontend dispatches at most one instruction per cycle, in order, starting
  ``frontend_depth`` cycles after reset.  It stalls while the busyboard reports a
  dependence (RAW, WAR or WAW on any register file) or while the target queue is
  full.
* Compute (CI) occupies its pipeline for ``ceil(512/hples) * mult_ii`` beats and
  completes ``mult_latency`` cycles after the last beat.  BFLY costs the same.
* Shuffle (SI) occupies ``ceil(512/hples)`` beats plus ``shuffle_latency``.
* Vector load/store moves ``min(hples, banks)`` lanes per beat; a beat that hits
  one bank with k distinct addresses costs k cycles.  Element ``e`` lives in bank
  ``e mod banks``.  A pattern touching a single address costs one beat.
  Scalar loads cost one beat; completion is ``ls_latency`` after issue.
* Register ``r`` lives in VRF memory ``r mod 16``.  In any cycle, a pipeline whose
  current instruction touches a memory already used by a higher-priority
  pipeline (compute > shuffle > load/store) loses the cycle.
* An instruction that dispatches in cycle t may start in cycle t and completes
  in cycle ``start + beats + latency`` when it is never stalled.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .funcsim import ArchState, execute
from .isa import VLEN, AddrMode, Instruction, OpClass, Opcode, Program

BANK_FREQ_GHZ = {32: 1.29, 64: 1.53, 128: 1.68, 256: 1.68}
VALID_HPLES = (4, 8, 16, 32, 64, 128, 256)
VRF_MEMORIES = 16

PIPE_CI, PIPE_SI, PIPE_LS = 0, 1, 2
PIPE_NAMES = ("compute", "shuffle", "load_store")
_PIPE_OF = {OpClass.CI: PIPE_CI, OpClass.SI: PIPE_SI, OpClass.LSI: PIPE_LS}
_FILE_BASE = {"v": 0, "s": 64, "a": 128, "m": 192}

# proxy cost for Pareto ranking; not an area model
PROXY_ALPHA = 0.5
PROXY_BETA = 0.004

HBM_BYTES_PER_S = 512e9
WORD_BYTES = 16


class ModelError(RuntimeError):
    """The timing model stopped making progress."""


@dataclass(frozen=True)
class MachineConfig:
    num_hples: int = 128
    num_banks: int = 128
    mult_latency: int = 8
    mult_ii: int = 1
    ls_latency: int = 4
    shuffle_latency: int = 4
    queue_depth: int | None = 16
    frontend_depth: int = 2

    def __post_init__(self):
        if self.num_hples not in VALID_HPLES:
            raise ValueError(f"num_hples must be one of {VALID_HPLES}")
        if self.num_banks not in BANK_FREQ_GHZ:
            raise ValueError(f"num_banks must be one of {tuple(BANK_FREQ_GHZ)}")
        if self.mult_ii < 1:
            raise ValueError("mult_ii must be >= 1")
        for name in ("mult_latency", "ls_latency", "shuffle_latency", "frontend_depth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.queue_depth is not None and self.queue_depth < 1:
            raise ValueError("queue_depth must be >= 1 (or None for unbounded)")

    @property
    def frequency_ghz(self) -> float:
        return BANK_FREQ_GHZ[self.num_banks]

    @property
    def lanes_per_beat(self) -> int:
        return min(self.num_hples, self.num_banks)

    def replace(self, **kw) -> "MachineConfig":
        return MachineConfig(**{**asdict(self), **kw})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MachineConfig":
        data = json.loads(text)
        data.pop("frequency_ghz", None)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "MachineConfig":
        return cls.from_json(Path(path).read_text())


# --- per-instruction costs ------------------------------------------------------

_beat_cache: dict[tuple, int] = {}


def vector_ls_beats(mode_key: tuple[int, int], base: int, config: MachineConfig) -> int:
    """Cycles a vector load/store spends in the VBAR, bank conflicts included."""
    banks = config.num_banks
    w = config.lanes_per_beat
    key = (mode_key, base % banks, w, banks)
    hit = _beat_cache.get(key)
    if hit is not None:
        return hit
    from .isa import _pattern_offsets
    addr = _pattern_offsets(AddrMode(mode_key[0]), mode_key[1]) + (base % banks)
    if addr[0] == addr[-1]:
        beats = 1
    else:
        beats = 0
        for start in range(0, VLEN, w):
            chunk = np.unique(addr[start:start + w])
            beats += int(np.bincount(chunk % banks, minlength=banks).max())
    _beat_cache[key] = beats
    return beats


def ideal_ls_beats(config: MachineConfig) -> int:
    return -(-VLEN // config.lanes_per_beat)


def compute_beats(config: MachineConfig) -> int:
    return -(-VLEN // config.num_hples) * config.mult_ii


def shuffle_beats(config: MachineConfig) -> int:
    return -(-VLEN // config.num_hples)


def instruction_cost(instr: Instruction, config: MachineConfig, base: int | None = None) -> tuple[int, int]:
    """(beats, latency) for one instruction.  ``base`` is the effective element
    address of a vector load/store when known (bank alignment); 0 otherwise."""
    cls = instr.op_class
    if cls is OpClass.CI:
        return compute_beats(config), config.mult_latency
    if cls is OpClass.SI:
        return shuffle_beats(config), config.shuffle_latency
    op = instr.opcode
    if op is Opcode.VLOAD or op is Opcode.VSTORE:
        am = instr.addr_mode
        return vector_ls_beats((int(am.mode), am.value), base or 0, config), config.ls_latency
    if op is Opcode.VBCAST:
        return 1, config.ls_latency
    return 1, max(config.ls_latency - 1, 0)


def vrf_memory_mask(instr: Instruction) -> int:
    mask = 0
    for r in instr.vector_reads() + instr.vector_writes():
        mask |= 1 << (r % VRF_MEMORIES)
    return mask


def register_keys(regs: Iterable[tuple[str, int]]) -> tuple[int, ...]:
    return tuple(sorted({_FILE_BASE[f] + r for f, r in regs}))


def effective_bases(program: Program) -> list[int]:
    """Effective VDM base of each vector load/store, tracking ALOAD values."""
    arf = [0] * 64
    bases = []
    for instr in program:
        if instr.opcode is Opcode.ALOAD:
            arf[instr.rt] = instr.address
        bases.append(arf[instr.addr_reg] + instr.address)
    return bases


# --- statistics ---------------------------------------------------------------------

@dataclass
class CycleStats:
    total_cycles: int = 0
    stall_cycles_busyboard: int = 0
    stall_cycles_queue_full: int = 0
    bank_conflict_cycles: int = 0
    vrf_port_conflict_cycles: int = 0
    pipeline_busy: dict[str, int] = field(default_factory=dict)
    busyboard_stall_by_class: dict[str, int] = field(default_factory=dict)
    max_wait_by_class: dict[str, int] = field(default_factory=dict)
    class_counts: dict[str, int] = field(default_factory=dict)
    dispatch: list[int] = field(default_factory=list, repr=False)
    start: list[int] = field(default_factory=list, repr=False)
    complete: list[int] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        for k in ("dispatch", "start", "complete"):
            d.pop(k)
        return d

    def to_json(self, with_trace: bool = False) -> str:
        return json.dumps(asdict(self) if with_trace else self.summary(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "CycleStats":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


_CLASS_NAMES = {PIPE_CI: "CI", PIPE_SI: "SI", PIPE_LS: "LSI"}


def simulate(program: Program, config: MachineConfig | None = None,
             state: ArchState | None = None, max_idle: int = 1_000_000) -> CycleStats:
    """Run the timing model.  When ``state`` is given, each instruction's
    architectural effect is applied to it at the instruction's completion cycle."""
    config = config or MachineConfig()
    instrs = program.instructions
    n = len(instrs)
    bases = effective_bases(program)
    pipe = [0] * n
    beats = [0] * n
    lat = [0] * n
    rkeys: list[tuple[int, ...]] = [()] * n
    wkeys: list[tuple[int, ...]] = [()] * n
    mem = [0] * n
    for i, ins in enumerate(instrs):
        pipe[i] = _PIPE_OF[ins.op_class]
        beats[i], lat[i] = instruction_cost(ins, config, bases[i])
        rkeys[i] = register_keys(ins.register_reads())
        wkeys[i] = register_keys(ins.register_writes())
        mem[i] = vrf_memory_mask(ins)

    if state is not None:
        state.program = program

    writers = [0] * 256
    readers = [0] * 256
    queues = [deque(), deque(), deque()]
    comps = [deque(), deque(), deque()]
    cur = [-1, -1, -1]
    rem = [0, 0, 0]
    dispatch = [-1] * n
    start = [-1] * n
    complete = [-1] * n
    busy = [0, 0, 0]
    conflict = [0, 0, 0]
    stall_bb = stall_qf = 0
    stall_bb_cls = [0, 0, 0]
    max_wait = [0, 0, 0]
    qdepth = config.queue_depth if config.queue_depth is not None else math.inf
    fe_depth = config.frontend_depth

    pc = 0
    t = 0
    done = 0
    last_dispatch = -1
    while done < n:
        # 1. completions release the busyboard
        for p in (0, 1, 2):
            cq = comps[p]
            while cq and cq[0][0] <= t:
                _, i = cq.popleft()
                complete[i] = t
                done += 1
                for k in rkeys[i]:
                    readers[k] -= 1
                for k in wkeys[i]:
                    writers[k] -= 1
                if state is not None:
                    execute(state, instrs[i])

        # 2. frontend
        fe_blocked = 0  # 0 idle/dispatched, 1 busyboard, 2 queue full
        if pc < n and t >= fe_depth:
            i = pc
            p = pipe[i]
            hazard = False
            for k in rkeys[i]:
                if writers[k]:
                    hazard = True
                    break
            if not hazard:
                for k in wkeys[i]:
                    if writers[k] or readers[k]:
                        hazard = True
                        break
            if hazard:
                fe_blocked = 1
                stall_bb += 1
                stall_bb_cls[p] += 1
            elif len(queues[p]) >= qdepth:
                fe_blocked = 2
                stall_qf += 1
            else:
                for k in rkeys[i]:
                    readers[k] += 1
                for k in wkeys[i]:
                    writers[k] += 1
                queues[p].append(i)
                dispatch[i] = t
                eligible = max(fe_depth, last_dispatch + 1)
                if t - eligible > max_wait[p]:
                    max_wait[p] = t - eligible
                last_dispatch = t
                pc += 1

        # 3. pipelines, highest priority first
        used = 0
        stalled = [False, False, False]
        pending_pop = False
        for p in (0, 1, 2):
            if cur[p] < 0 and queues[p]:
                i = queues[p].popleft()
                cur[p] = i
                start[i] = t
                rem[p] = beats[i]
            i = cur[p]
            if i < 0:
                continue
            if mem[i] & used:
                conflict[p] += 1
                stalled[p] = True
                continue
            used |= mem[i]
            busy[p] += 1
            rem[p] -= 1
            if rem[p] == 0:
                comps[p].append((t + 1 + lat[i], i))
                cur[p] = -1
                if queues[p]:
                    pending_pop = True

        if done == n:
            break

        # 4. skip cycles in which nothing can change
        nxt = t + 1
        if not pending_pop and (pc >= n or fe_blocked or t + 1 < fe_depth):
            horizon = math.inf
            for p in (0, 1, 2):
                if comps[p]:
                    horizon = min(horizon, comps[p][0][0])
                if cur[p] >= 0:
                    # a stalled pipe may resume as soon as the blocker's beats end
                    horizon = min(horizon, t + 1 if stalled[p] else t + rem[p])
            if pc < n and t + 1 < fe_depth:
                horizon = min(horizon, fe_depth)
            if horizon == math.inf:
                raise ModelError(f"deadlock at cycle {t}: pc={pc}, nothing in flight")
            if horizon - t > max_idle:
                raise ModelError(f"no progress for {max_idle} cycles at cycle {t}")
            if horizon > t + 1:
                skip = horizon - t - 1
                for p in (0, 1, 2):
                    if cur[p] >= 0:
                        if stalled[p]:
                            conflict[p] += skip
                        else:
                            busy[p] += skip
                            rem[p] -= skip
                if fe_blocked == 1:
                    stall_bb += skip
                    stall_bb_cls[pipe[pc]] += skip
                elif fe_blocked == 2:
                    stall_qf += skip
                nxt = horizon
        t = nxt

    stats = CycleStats()
    stats.total_cycles = max(complete) if n else 0
    stats.stall_cycles_busyboard = stall_bb
    stats.stall_cycles_queue_full = stall_qf
    ideal = ideal_ls_beats(config)
    stats.bank_conflict_cycles = sum(
        beats[i] - ideal for i, ins in enumerate(instrs)
        if ins.opcode in (Opcode.VLOAD, Opcode.VSTORE) and beats[i] > ideal)
    stats.vrf_port_conflict_cycles = sum(conflict)
    stats.pipeline_busy = {PIPE_NAMES[p]: busy[p] for p in range(3)}
    stats.busyboard_stall_by_class = {_CLASS_NAMES[p]: stall_bb_cls[p] for p in range(3)}
    stats.max_wait_by_class = {_CLASS_NAMES[p]: max_wait[p] for p in range(3)}
    counts = [0, 0, 0]
    for p in pipe:
        counts[p] += 1
    stats.class_counts = {_CLASS_NAMES[p]: counts[p] for p in range(3)}
    stats.dispatch, stats.start, stats.complete = dispatch, start, complete
    return stats


# --- reporting -----------------------------------------------------------------------

@dataclass
class PerfReport:
    n: int
    cycles: int
    frequency_ghz: float
    runtime_us: float
    theoretical_us: float
    ratio: float
    hbm_load_us: float
    hbm_store_us: float
    hbm_overlaps: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("n", f"{self.n}"),
            ("cycles", f"{self.cycles}"),
            ("frequency (GHz)", f"{self.frequency_ghz:.2f}"),
            ("runtime (us)", f"{self.runtime_us:.3f}"),
            ("theoretical (us)", f"{self.theoretical_us:.3f}"),
            ("runtime / theoretical", f"{self.ratio:.2f}x"),
            ("HBM load (us)", f"{self.hbm_load_us:.3f}"),
            ("HBM store (us)", f"{self.hbm_store_us:.3f}"),
            ("HBM hidden behind compute", "yes" if self.hbm_overlaps else "no"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def theoretical_us(n: int, num_hples: int, frequency_ghz: float) -> float:
    return n * math.log2(n) / (num_hples * frequency_ghz * 1e3)


def hbm_transfer_us(n: int) -> float:
    return n * WORD_BYTES / HBM_BYTES_PER_S * 1e6


def runtime_us(cycles: int, config: MachineConfig) -> float:
    return cycles / (config.frequency_ghz * 1e3)


def report(stats: CycleStats | int, config: MachineConfig, n: int) -> PerfReport:
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    cycles = stats if isinstance(stats, int) else stats.total_cycles
    f = config.frequency_ghz
    runtime = runtime_us(cycles, config)
    theo = theoretical_us(n, config.num_hples, f)
    hbm = hbm_transfer_us(n)
    return PerfReport(n, cycles, f, runtime, theo, runtime / theo, hbm, hbm, hbm <= runtime)


# --- design-space sweep ------------------------------------------------------------------

def proxy_cost(num_hples: int, num_banks: int) -> float:
    return num_hples + PROXY_ALPHA * num_banks + PROXY_BETA * num_hples * num_banks


@dataclass
class SweepRow:
    hples: int
    banks: int
    cycles: int
    runtime_us: float
    proxy_cost: float
    stall_busyboard: int
    stall_queue_full: int
    bank_conflicts: int
    vrf_conflicts: int
    busy_compute: int
    busy_shuffle: int
    busy_load_store: int

    @property
    def bound_by(self) -> str:
        busy = {"compute": self.busy_compute, "shuffle": self.busy_shuffle,
                "load_store": self.busy_load_store}
        return max(busy, key=busy.get)

    @property
    def utilization(self) -> float:
        return max(self.busy_compute, self.busy_shuffle, self.busy_load_store) / self.cycles


CSV_FIELDS = ["hples", "banks", "cycles", "runtime_us", "proxy_cost", "stall_busyboard",
              "stall_queue_full", "bank_conflicts", "vrf_conflicts", "busy_compute",
              "busy_shuffle", "busy_load_store"]


def _sweep_point(program: Program, config: MachineConfig) -> SweepRow:
    stats = simulate(program, config)
    b = stats.pipeline_busy
    return SweepRow(config.num_hples, config.num_banks, stats.total_cycles,
                    runtime_us(stats.total_cycles, config),
                    proxy_cost(config.num_hples, config.num_banks), stats.stall_cycles_busyboard,
                    stats.stall_cycles_queue_full, stats.bank_conflict_cycles,
                    stats.vrf_port_conflict_cycles, b["compute"], b["shuffle"], b["load_store"])


def pareto_frontier(rows: Sequence[SweepRow]) -> list[SweepRow]:
    """Rows not dominated in (proxy_cost, runtime), sorted by cost."""
    front = []
    for r in rows:
        dominated = any(
            o is not r and o.proxy_cost <= r.proxy_cost and o.runtime_us <= r.runtime_us
            and (o.proxy_cost < r.proxy_cost or o.runtime_us < r.runtime_us)
            for o in rows)
        if not dominated:
            front.append(r)
    return sorted(front, key=lambda r: r.proxy_cost)


def follows_bank_rule(row: SweepRow) -> bool:
    return row.hples in (row.banks, 2 * row.banks)


def frontier_exceptions(rows: Sequence[SweepRow], front: Sequence[SweepRow]) -> list[dict]:
    """Stall attribution for frontier points with HPLEs not in {banks, 2*banks}."""
    by_key = {(r.hples, r.banks): r for r in rows}
    min_banks = min(r.banks for r in rows)
    out = []
    for r in front:
        if follows_bank_rule(r):
            continue
        evidence = {
            "bound_by": r.bound_by,
            "utilization": round(r.utilization, 3),
            "busy": {"compute": r.busy_compute, "shuffle": r.busy_shuffle,
                     "load_store": r.busy_load_store},
            "stall_busyboard": r.stall_busyboard,
            "bank_conflicts": r.bank_conflicts,
        }
        if r.hples < r.banks and r.banks == min_banks:
            reason = (f"banks already at the sweep minimum ({min_banks}); with {r.hples} HPLEs "
                      f"the {r.bound_by} pipeline bounds runtime, so no rule-conforming point is cheaper")
        else:
            fewer = by_key.get((r.hples, r.banks // 2))
            if fewer is not None and fewer.bound_by == r.bound_by and r.bound_by != "load_store":
                gain = fewer.runtime_us / r.runtime_us
                freq = BANK_FREQ_GHZ[r.banks] / BANK_FREQ_GHZ[fewer.banks]
                evidence["runtime_gain_vs_half_banks"] = round(gain, 3)
                evidence["frequency_gain_vs_half_banks"] = round(freq, 3)
                reason = (f"{r.bound_by}-bound at both {fewer.banks} and {r.banks} banks; the extra "
                          f"banks buy clock frequency ({freq:.2f}x), not bandwidth ({gain:.2f}x faster)")
            else:
                reason = f"{r.bound_by}-bound with utilization {r.utilization:.2f}"
        out.append({"hples": r.hples, "banks": r.banks, "reason": reason, "evidence": evidence})
    return out


@dataclass
class SweepResult:
    rows: list[SweepRow]
    frontier: list[SweepRow]
    exceptions: list[dict]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_FIELDS)
            for r in self.rows:
                w.writerow([getattr(r, k) if k != "runtime_us" else f"{r.runtime_us:.6f}"
                            for k in CSV_FIELDS])

    def frontier_json(self) -> str:
        return json.dumps({
            "frontier": [{"hples": r.hples, "banks": r.banks, "runtime_us": round(r.runtime_us, 6),
                          "proxy_cost": r.proxy_cost} for r in self.frontier],
            "exceptions": self.exceptions,
        }, indent=2)


def sweep(programs: Program | Callable[[MachineConfig], Program],
          hples: Sequence[int] = VALID_HPLES, banks: Sequence[int] = tuple(BANK_FREQ_GHZ),
          base: MachineConfig | None = None, workers: int = 1) -> SweepResult:
    """Simulate every (hples, banks) point and rank them by proxy cost and runtime."""
    base = base or MachineConfig()
    configs = [base.replace(num_hples=h, num_banks=b) for h in hples for b in banks]
    get = programs if callable(programs) else (lambda _cfg: programs)
    jobs = [(get(c), c) for c in configs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_sweep_point, *zip(*jobs)))
    else:
        rows = [_sweep_point(p, c) for p, c in jobs]
    front = pareto_frontier(rows)
    return SweepResult(rows, front, frontier_exceptions(rows, front))


def parse_grid(spec: str) -> tuple[list[int], list[int]]:
    """Parse ``hples=4..256,banks=32..256`` (powers of two) or explicit ``a|b|c`` lists."""
    out = {"hples": list(VALID_HPLES), "banks": list(BANK_FREQ_GHZ)}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in out:
            raise ValueError(f"bad grid term {part!r}")
        if ".." in val:
            lo, hi = (int(x) for x in val.split(".."))
            vals = []
            v = lo
            while v <= hi:
                vals.append(v)
                v *= 2
        else:
            vals = [int(x) for x in val.split("|")]
        out[key] = vals
    return out["hples"], out["banks"]
