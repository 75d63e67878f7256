"""B512 instruction set: opcodes, 64-bit encoding and vector access patterns.

Bit layout of one instruction word::

    [63:55] VD1   [54:49] VT1   [48] BFLY   [47:44] opcode
    [43:24] address   [23:18] VD   [17:12] VS / MODE   [11:6] VT / VALUE / RT   [5:0] RM

Load/store instructions put the address-register index in RM.  BFLY shares the
VMUL opcode nibble and is told apart by bit 48.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VLEN = 512
NUM_REGS = 64
ADDRESS_BITS = 20
MAX_ADDRESS = (1 << ADDRESS_BITS) - 1

PROGRAM_MAGIC = b"B512PROG"
PROGRAM_VERSION = 1


class EncodingError(ValueError):
    pass


class IllegalInstruction(ValueError):
    pass


class AddressFault(IndexError):
    pass


class OpClass(enum.Enum):
    LSI = "load/store"
    CI = "compute"
    SI = "shuffle"


class Opcode(enum.Enum):
    # (nibble, class, mnemonic)
    VLOAD = (0x0, OpClass.LSI, "vload")
    VSTORE = (0x1, OpClass.LSI, "vstore")
    SLOAD = (0x2, OpClass.LSI, "sload")
    MLOAD = (0x3, OpClass.LSI, "mload")
    ALOAD = (0x4, OpClass.LSI, "aload")
    VBCAST = (0x5, OpClass.LSI, "vbroadcast")
    VADD = (0x6, OpClass.CI, "vaddmod")
    VSUB = (0x7, OpClass.CI, "vsubmod")
    VMUL = (0x8, OpClass.CI, "vmulmod")
    BFLY = (0x8, OpClass.CI, "bfly")
    VADDS = (0x9, OpClass.CI, "vaddmods")
    VSUBS = (0xA, OpClass.CI, "vsubmods")
    VMULS = (0xB, OpClass.CI, "vmulmods")
    UNPKLO = (0xC, OpClass.SI, "vunpacklo")
    UNPKHI = (0xD, OpClass.SI, "vunpackhi")
    PKLO = (0xE, OpClass.SI, "vpacklo")
    PKHI = (0xF, OpClass.SI, "vpackhi")

    @property
    def nibble(self) -> int:
        return self.value[0]

    @property
    def op_class(self) -> OpClass:
        return self.value[1]

    @property
    def mnemonic(self) -> str:
        return self.value[2]


_BY_NIBBLE = {op.nibble: op for op in Opcode if op is not Opcode.BFLY}

VECTOR_MEM_OPS = frozenset({Opcode.VLOAD, Opcode.VSTORE})
SCALAR_LOAD_OPS = frozenset({Opcode.SLOAD, Opcode.MLOAD})
VV_OPS = frozenset({Opcode.VADD, Opcode.VSUB, Opcode.VMUL})
VS_OPS = frozenset({Opcode.VADDS, Opcode.VSUBS, Opcode.VMULS})
SHUFFLE_OPS = frozenset({Opcode.UNPKLO, Opcode.UNPKHI, Opcode.PKLO, Opcode.PKHI})


class AddrMode(enum.IntEnum):
    CONTIGUOUS = 0
    STRIDED = 1
    STRIDED_SKIP = 2
    REPEATED = 3


@dataclass(frozen=True)
class AddressMode:
    mode: AddrMode = AddrMode.CONTIGUOUS
    value: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", AddrMode(self.mode))
        if not 0 <= self.value <= 9:
            raise EncodingError(f"address-mode VALUE must satisfy 2^VALUE <= 512, got {self.value}")

    def offsets(self) -> np.ndarray:
        """Element offsets (relative to the base) touched by lanes 0..511."""
        return _pattern_offsets(self.mode, self.value)


CONTIGUOUS = AddressMode()

_pattern_cache: dict[tuple[int, int], np.ndarray] = {}


def _pattern_offsets(mode: AddrMode, value: int) -> np.ndarray:
    key = (int(mode), value)
    cached = _pattern_cache.get(key)
    if cached is not None:
        return cached
    lane = np.arange(VLEN, dtype=np.int64)
    if mode == AddrMode.CONTIGUOUS:
        offs = lane
    elif mode == AddrMode.STRIDED:
        offs = lane << value
    elif mode == AddrMode.STRIDED_SKIP:
        offs = ((lane >> value) << (value + 1)) + (lane & ((1 << value) - 1))
    else:
        offs = lane >> value
    offs.setflags(write=False)
    _pattern_cache[key] = offs
    return offs


def gen_access_pattern(mode: AddressMode, base: int, capacity: int | None = None) -> np.ndarray:
    """Element indices read or written by lanes 0..511 of a vector load/store."""
    idx = _pattern_offsets(mode.mode, mode.value) + base
    if base < 0 or (capacity is not None and idx[-1] >= capacity):
        # every pattern is nondecreasing in the lane index
        raise AddressFault(f"access {mode.mode.name}/{mode.value} at base {base} exceeds capacity {capacity}")
    return idx


def pattern_extent(mode: AddressMode) -> int:
    """One past the largest offset touched by the pattern."""
    return int(_pattern_offsets(mode.mode, mode.value)[-1]) + 1


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    vd: int = 0
    vs: int = 0
    vt: int = 0
    vd1: int = 0
    vt1: int = 0
    rm: int = 0
    rt: int = 0
    address: int = 0
    addr_reg: int = 0
    addr_mode: AddressMode = field(default=CONTIGUOUS)

    @property
    def op_class(self) -> OpClass:
        return self.opcode.op_class

    def validate(self) -> None:
        for name in ("vd", "vs", "vt", "vd1", "vt1", "rm", "rt", "addr_reg"):
            v = getattr(self, name)
            if not 0 <= v < NUM_REGS:
                raise EncodingError(f"{self.opcode.mnemonic}: {name}={v} out of range 0..63")
        if not 0 <= self.address <= MAX_ADDRESS:
            raise EncodingError(f"{self.opcode.mnemonic}: address {self.address} exceeds 20 bits")
        used = _USED_FIELDS[self.opcode]
        for name in _ALL_FIELDS:
            if name not in used and getattr(self, name) != _FIELD_DEFAULTS[name]:
                raise EncodingError(f"{self.opcode.mnemonic} does not use field {name}")

    # register usage, consumed by the simulators and the scheduler
    def vector_reads(self) -> tuple[int, ...]:
        op = self.opcode
        if op is Opcode.VSTORE:
            return (self.vd,)
        if op is Opcode.BFLY:
            return (self.vs, self.vt, self.vt1)
        if op in VV_OPS or op in SHUFFLE_OPS:
            return (self.vs, self.vt)
        if op in VS_OPS:
            return (self.vs,)
        return ()

    def vector_writes(self) -> tuple[int, ...]:
        op = self.opcode
        if op is Opcode.BFLY:
            return (self.vd, self.vd1)
        if op in (Opcode.VLOAD, Opcode.VBCAST) or op in VV_OPS or op in VS_OPS or op in SHUFFLE_OPS:
            return (self.vd,)
        return ()

    def register_reads(self) -> list[tuple[str, int]]:
        """(file, index) pairs read, files being 'v', 's', 'a', 'm'."""
        regs = [("v", r) for r in self.vector_reads()]
        op = self.opcode
        if op in VECTOR_MEM_OPS or op is Opcode.VBCAST or op in SCALAR_LOAD_OPS:
            regs.append(("a", self.addr_reg))
        if op.op_class is OpClass.CI:
            regs.append(("m", self.rm))
        if op in VS_OPS:
            regs.append(("s", self.rt))
        return regs

    def register_writes(self) -> list[tuple[str, int]]:
        regs = [("v", r) for r in self.vector_writes()]
        op = self.opcode
        if op is Opcode.SLOAD:
            regs.append(("s", self.rt))
        elif op is Opcode.MLOAD:
            regs.append(("m", self.rt))
        elif op is Opcode.ALOAD:
            regs.append(("a", self.rt))
        return regs


_ALL_FIELDS = ("vd", "vs", "vt", "vd1", "vt1", "rm", "rt", "address", "addr_reg", "addr_mode")
_FIELD_DEFAULTS = {name: 0 for name in _ALL_FIELDS} | {"addr_mode": CONTIGUOUS}
_USED_FIELDS: dict[Opcode, frozenset[str]] = {}
for _op in Opcode:
    if _op in VECTOR_MEM_OPS:
        _f = {"vd", "address", "addr_reg", "addr_mode"}
    elif _op is Opcode.VBCAST:
        _f = {"vd", "address", "addr_reg"}
    elif _op in SCALAR_LOAD_OPS:
        _f = {"rt", "address", "addr_reg"}
    elif _op is Opcode.ALOAD:
        _f = {"rt", "address"}
    elif _op is Opcode.BFLY:
        _f = {"vd", "vs", "vt", "vd1", "vt1", "rm"}
    elif _op in VV_OPS:
        _f = {"vd", "vs", "vt", "rm"}
    elif _op in VS_OPS:
        _f = {"vd", "vs", "rt", "rm"}
    else:
        _f = {"vd", "vs", "vt"}
    _USED_FIELDS[_op] = frozenset(_f)


def encode(instr: Instruction) -> int:
    instr.validate()
    op = instr.opcode
    word = op.nibble << 44
    word |= instr.address << 24
    word |= instr.vd << 18
    if op in VECTOR_MEM_OPS:
        word |= int(instr.addr_mode.mode) << 12 | instr.addr_mode.value << 6 | instr.addr_reg
    elif op is Opcode.VBCAST:
        word |= instr.addr_reg
    elif op in SCALAR_LOAD_OPS:
        word |= instr.rt << 6 | instr.addr_reg
    elif op is Opcode.ALOAD:
        word |= instr.rt << 6
    elif op in VS_OPS:
        word |= instr.vs << 12 | instr.rt << 6 | instr.rm
    else:
        word |= instr.vs << 12 | instr.vt << 6 | instr.rm
        if op is Opcode.BFLY:
            word |= instr.vd1 << 55 | instr.vt1 << 49 | 1 << 48
    return word


def _bits(word: int, hi: int, lo: int) -> int:
    return (word >> lo) & ((1 << (hi - lo + 1)) - 1)


def decode(word: int) -> Instruction:
    if not 0 <= word < 1 << 64:
        raise IllegalInstruction(f"not a 64-bit word: {word}")
    nibble = _bits(word, 47, 44)
    op = _BY_NIBBLE.get(nibble)
    if op is None:
        raise IllegalInstruction(f"undefined opcode nibble {nibble:#x}")
    if _bits(word, 48, 48):
        if op is not Opcode.VMUL:
            raise IllegalInstruction(f"BFLY flag set on {op.mnemonic}")
        op = Opcode.BFLY
    address = _bits(word, 43, 24)
    vd = _bits(word, 23, 18)
    f2, f1, f0 = _bits(word, 17, 12), _bits(word, 11, 6), _bits(word, 5, 0)
    kw: dict = {}
    if op in VECTOR_MEM_OPS:
        if f2 > max(AddrMode) or f1 > 9:
            raise IllegalInstruction(f"bad address mode {f2}/{f1}")
        kw = dict(vd=vd, address=address, addr_reg=f0, addr_mode=AddressMode(AddrMode(f2), f1))
    elif op is Opcode.VBCAST:
        kw = dict(vd=vd, address=address, addr_reg=f0)
    elif op in SCALAR_LOAD_OPS:
        kw = dict(rt=f1, address=address, addr_reg=f0)
    elif op is Opcode.ALOAD:
        kw = dict(rt=f1, address=address)
    elif op in VS_OPS:
        kw = dict(vd=vd, vs=f2, rt=f1, rm=f0, address=address)
    else:
        kw = dict(vd=vd, vs=f2, vt=f1, rm=f0, address=address)
        if op is Opcode.BFLY:
            kw.update(vd1=_bits(word, 63, 55), vt1=_bits(word, 54, 49))
    kw.setdefault("address", 0)
    instr = Instruction(op, **kw)
    try:
        instr.validate()
    except EncodingError as e:
        raise IllegalInstruction(str(e)) from None
    # any bit the opcode does not own must be zero
    if encode(instr) != word:
        raise IllegalInstruction(f"reserved bits set in {word:#018x}")
    return instr


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    labels: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not self.instructions:
            raise ValueError("empty program")
        for i in self.instructions:
            i.validate()

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def words(self) -> list[int]:
        return [encode(i) for i in self.instructions]

    def to_bytes(self) -> bytes:
        words = self.words()
        header = PROGRAM_MAGIC + struct.pack("<II", PROGRAM_VERSION, len(words))
        return header + struct.pack(f"<{len(words)}Q", *words)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Program":
        if len(data) < 16 or data[:8] != PROGRAM_MAGIC:
            raise ValueError("not a B512 program image (bad magic)")
        version, count = struct.unpack_from("<II", data, 8)
        if version != PROGRAM_VERSION:
            raise ValueError(f"unsupported program version {version}")
        if len(data) != 16 + 8 * count:
            raise ValueError(f"truncated program: header says {count} words")
        words = struct.unpack_from(f"<{count}Q", data, 16)
        instrs = []
        for i, w in enumerate(words):
            try:
                instrs.append(decode(w))
            except IllegalInstruction as e:
                raise IllegalInstruction(f"word {i}: {e}") from None
        return cls(tuple(instrs))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Program":
        return cls.from_bytes(Path(path).read_bytes())
