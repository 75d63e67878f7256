"""Bit-exact architectural simulator for B512 programs.

Memories hold 128-bit words and are addressed in elements.  Execution is
strictly sequential; timing lives in :mod:`b512.perfsim`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .isa import (
    NUM_REGS, VLEN, AddrMode, AddressFault, Instruction, Opcode, Program,
    gen_access_pattern,
)
from .modmath import DomainError, Modulus, ParameterError

WORD_BYTES = 16
WORD_MASK = (1 << 128) - 1
MIB = 1 << 20
DEFAULT_VDM_BYTES = 4 * MIB
MAX_VDM_BYTES = 32 * MIB
DEFAULT_SDM_BYTES = 32 * 1024

_HALF = VLEN // 2


class SimulationError(RuntimeError):
    def __init__(self, pc: int, instr: Instruction | None, cause: Exception):
        where = f"pc={pc}" + (f" ({instr.opcode.mnemonic})" if instr is not None else "")
        super().__init__(f"{where}: {cause}")
        self.pc = pc
        self.instr = instr
        self.cause = cause


@dataclass
class ArchState:
    program: Program | None = None
    vdm_bytes: int = DEFAULT_VDM_BYTES
    sdm_bytes: int = DEFAULT_SDM_BYTES
    debug: bool = True
    vdm: list[int] = field(init=False, repr=False)
    sdm: list[int] = field(init=False, repr=False)
    vrf: list[list[int]] = field(init=False, repr=False)
    srf: list[int] = field(init=False, repr=False)
    arf: list[int] = field(init=False, repr=False)
    mrf: list[Modulus | None] = field(init=False, repr=False)
    pc: int = 0

    def __post_init__(self):
        if not 0 < self.vdm_bytes <= MAX_VDM_BYTES or self.vdm_bytes % WORD_BYTES:
            raise ValueError(f"VDM size must be a multiple of 16 bytes up to 32 MiB, got {self.vdm_bytes}")
        self.vdm = [0] * (self.vdm_bytes // WORD_BYTES)
        self.sdm = [0] * (self.sdm_bytes // WORD_BYTES)
        self.vrf = [[0] * VLEN for _ in range(NUM_REGS)]
        self.srf = [0] * NUM_REGS
        self.arf = [0] * NUM_REGS
        self.mrf = [None] * NUM_REGS

    @property
    def vdm_words(self) -> int:
        return len(self.vdm)

    # --- memory images -------------------------------------------------
    def write_vdm(self, offset: int, values: Sequence[int]) -> None:
        _write(self.vdm, offset, values, "VDM")

    def read_vdm(self, offset: int, length: int) -> list[int]:
        return _read(self.vdm, offset, length, "VDM")

    def write_sdm(self, offset: int, values: Sequence[int]) -> None:
        _write(self.sdm, offset, values, "SDM")

    def read_sdm(self, offset: int, length: int) -> list[int]:
        return _read(self.sdm, offset, length, "SDM")

    def load_vdm(self, offset: int, data: bytes) -> None:
        self.write_vdm(offset, words_from_bytes(data))

    def dump_vdm(self, offset: int = 0, length: int | None = None) -> bytes:
        if length is None:
            length = len(self.vdm) - offset
        return words_to_bytes(self.read_vdm(offset, length))

    def load_sdm(self, offset: int, data: bytes) -> None:
        self.write_sdm(offset, words_from_bytes(data))

    def dump_sdm(self, offset: int = 0, length: int | None = None) -> bytes:
        if length is None:
            length = len(self.sdm) - offset
        return words_to_bytes(self.read_sdm(offset, length))


def _write(mem: list[int], offset: int, values: Sequence[int], name: str) -> None:
    values = list(values)
    if offset < 0 or offset + len(values) > len(mem):
        raise AddressFault(f"{name} write [{offset}, {offset + len(values)}) outside {len(mem)} words")
    if any(not 0 <= v <= WORD_MASK for v in values):
        raise ValueError(f"{name} values must be unsigned 128-bit")
    mem[offset:offset + len(values)] = values


def _read(mem: list[int], offset: int, length: int, name: str) -> list[int]:
    if offset < 0 or length < 0 or offset + length > len(mem):
        raise AddressFault(f"{name} read [{offset}, {offset + length}) outside {len(mem)} words")
    return mem[offset:offset + length]


def words_to_bytes(values: Iterable[int]) -> bytes:
    return b"".join(v.to_bytes(WORD_BYTES, "little") for v in values)


def words_from_bytes(data: bytes) -> list[int]:
    if len(data) % WORD_BYTES:
        raise ValueError("image length is not a multiple of 16 bytes")
    return [int.from_bytes(data[i:i + WORD_BYTES], "little") for i in range(0, len(data), WORD_BYTES)]


# --- lane arithmetic ---------------------------------------------------------

def _check_lanes(values: list[int], m: Modulus, reg: int) -> None:
    if max(values) >= m.q:
        raise DomainError(f"v{reg} holds a lane >= modulus {m.q}")


def lanes_add(xs, ys, q: int) -> list[int]:
    return [s - q if s >= q else s for s in map(int.__add__, xs, ys)]


def lanes_sub(xs, ys, q: int) -> list[int]:
    return [d + q if d < 0 else d for d in map(int.__sub__, xs, ys)]


def lanes_mul(xs, ys, m: Modulus) -> list[int]:
    q, mu, k1, k2 = m.q, m.barrett_mu, m.width - 1, m.width + 1
    out = []
    append = out.append
    for x in map(int.__mul__, xs, ys):
        r = x - (((x >> k1) * mu) >> k2) * q
        if r >= q:
            r -= q
            if r >= q:
                r -= q
        append(r)
    return out


def unpklo(vs, vt) -> list[int]:
    out = [0] * VLEN
    out[0::2] = vs[:_HALF]
    out[1::2] = vt[:_HALF]
    return out


def unpkhi(vs, vt) -> list[int]:
    out = [0] * VLEN
    out[0::2] = vs[_HALF:]
    out[1::2] = vt[_HALF:]
    return out


def pklo(vs, vt) -> list[int]:
    return list(vs[0::2]) + list(vt[0::2])


def pkhi(vs, vt) -> list[int]:
    return list(vs[1::2]) + list(vt[1::2])


_SHUFFLES = {Opcode.UNPKLO: unpklo, Opcode.UNPKHI: unpkhi, Opcode.PKLO: pklo, Opcode.PKHI: pkhi}


# --- execution ----------------------------------------------------------------

def _modulus(state: ArchState, rm: int) -> Modulus:
    m = state.mrf[rm]
    if m is None:
        raise DomainError(f"modulus register m{rm} was never loaded")
    return m


def execute(state: ArchState, instr: Instruction) -> None:
    """Apply one instruction's architectural effect (pc untouched)."""
    op = instr.opcode
    vrf = state.vrf
    if op is Opcode.VLOAD or op is Opcode.VSTORE:
        base = state.arf[instr.addr_reg] + instr.address
        mode = instr.addr_mode
        if mode.mode == AddrMode.CONTIGUOUS:
            if base < 0 or base + VLEN > len(state.vdm):
                raise AddressFault(f"vector access at {base} outside VDM of {len(state.vdm)} words")
            if op is Opcode.VLOAD:
                vrf[instr.vd] = state.vdm[base:base + VLEN]
            else:
                state.vdm[base:base + VLEN] = vrf[instr.vd]
            return
        idx = gen_access_pattern(mode, base, len(state.vdm)).tolist()
        if op is Opcode.VLOAD:
            vdm = state.vdm
            vrf[instr.vd] = [vdm[i] for i in idx]
        else:
            vdm = state.vdm
            for i, v in zip(idx, vrf[instr.vd]):
                vdm[i] = v
        return
    if op is Opcode.ALOAD:
        state.arf[instr.rt] = instr.address
        return
    if op is Opcode.SLOAD or op is Opcode.MLOAD or op is Opcode.VBCAST:
        addr = state.arf[instr.addr_reg] + instr.address
        if not 0 <= addr < len(state.sdm):
            raise AddressFault(f"scalar access at {addr} outside SDM of {len(state.sdm)} words")
        word = state.sdm[addr]
        if op is Opcode.SLOAD:
            state.srf[instr.rt] = word
        elif op is Opcode.MLOAD:
            try:
                state.mrf[instr.rt] = Modulus(word)
            except ParameterError as e:
                raise DomainError(str(e)) from None
        else:
            vrf[instr.vd] = [word] * VLEN
        return
    shuffle = _SHUFFLES.get(op)
    if shuffle is not None:
        vrf[instr.vd] = shuffle(vrf[instr.vs], vrf[instr.vt])
        return

    # compute instructions
    m = _modulus(state, instr.rm)
    q = m.q
    xs = vrf[instr.vs]
    if state.debug:
        _check_lanes(xs, m, instr.vs)
    if op in (Opcode.VADDS, Opcode.VSUBS, Opcode.VMULS):
        s = state.srf[instr.rt]
        if s >= q:
            raise DomainError(f"s{instr.rt}={s} >= modulus {q}")
        ys = [s] * VLEN
    else:
        ys = vrf[instr.vt]
        if state.debug:
            _check_lanes(ys, m, instr.vt)
    if op is Opcode.BFLY:
        tw = vrf[instr.vt1]
        if state.debug:
            _check_lanes(tw, m, instr.vt1)
        t = lanes_mul(ys, tw, m)
        hi = lanes_add(xs, t, q)
        lo = lanes_sub(xs, t, q)
        vrf[instr.vd] = hi
        vrf[instr.vd1] = lo
    elif op is Opcode.VADD or op is Opcode.VADDS:
        vrf[instr.vd] = lanes_add(xs, ys, q)
    elif op is Opcode.VSUB or op is Opcode.VSUBS:
        vrf[instr.vd] = lanes_sub(xs, ys, q)
    else:
        vrf[instr.vd] = lanes_mul(xs, ys, m)


def step(state: ArchState) -> ArchState:
    prog = state.program
    if prog is None or not 0 <= state.pc < len(prog):
        raise SimulationError(state.pc, None, IndexError("pc outside program"))
    instr = prog[state.pc]
    try:
        execute(state, instr)
    except (AddressFault, DomainError, ValueError) as e:
        raise SimulationError(state.pc, instr, e) from e
    state.pc += 1
    return state


def run_program(program: Program, state: ArchState | None = None) -> ArchState:
    """Execute ``program`` to completion, mutating and returning ``state``."""
    if state is None:
        state = ArchState()
    state.program = program
    state.pc = 0
    n = len(program)
    while state.pc < n:
        step(state)
    return state


# --- image files -----------------------------------------------------------------

@dataclass
class Region:
    name: str
    offset: int
    values: list[int]


def save_image(path: str | Path, regions: Sequence[Region]) -> None:
    """Write ``path`` (raw little-endian words) and ``path.manifest``."""
    path = Path(path)
    with open(path, "wb") as f:
        for r in regions:
            f.write(words_to_bytes(r.values))
    lines = [f"{r.name} {r.offset} {len(r.values)}" for r in regions]
    Path(str(path) + ".manifest").write_text("\n".join(lines) + "\n")


def load_image(path: str | Path) -> list[Region]:
    path = Path(path)
    data = path.read_bytes()
    regions = []
    pos = 0
    for lineno, line in enumerate(Path(str(path) + ".manifest").read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            name, offset, length = line.split()
            offset, length = int(offset), int(length)
        except ValueError:
            raise ValueError(f"{path}.manifest line {lineno}: expected 'name offset length'") from None
        chunk = data[pos:pos + length * WORD_BYTES]
        if len(chunk) != length * WORD_BYTES:
            raise ValueError(f"{path}: image shorter than manifest region {name!r}")
        regions.append(Region(name, offset, words_from_bytes(chunk)))
        pos += len(chunk)
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes not described by the manifest")
    return regions
