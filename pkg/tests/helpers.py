"""Random valid instructions and small programs for property tests."""

import random

from b512.isa import (
    SCALAR_LOAD_OPS, SHUFFLE_OPS, VECTOR_MEM_OPS, VS_OPS, VV_OPS, AddressMode, AddrMode,
    Instruction, Opcode,
)


def random_instruction(rng: random.Random) -> Instruction:
    op = rng.choice(list(Opcode))
    r = lambda: rng.randrange(64)  # noqa: E731
    addr = rng.randrange(1 << 20)
    if op in VECTOR_MEM_OPS:
        mode = AddressMode(rng.choice(list(AddrMode)), rng.randrange(10))
        return Instruction(op, vd=r(), address=addr, addr_reg=r(), addr_mode=mode)
    if op is Opcode.VBCAST:
        return Instruction(op, vd=r(), address=addr, addr_reg=r())
    if op in SCALAR_LOAD_OPS:
        return Instruction(op, rt=r(), address=addr, addr_reg=r())
    if op is Opcode.ALOAD:
        return Instruction(op, rt=r(), address=addr)
    if op is Opcode.BFLY:
        return Instruction(op, vd=r(), vd1=r(), vs=r(), vt=r(), vt1=r(), rm=r())
    if op in VV_OPS:
        return Instruction(op, vd=r(), vs=r(), vt=r(), rm=r())
    if op in VS_OPS:
        return Instruction(op, vd=r(), vs=r(), rt=r(), rm=r())
    assert op in SHUFFLE_OPS
    return Instruction(op, vd=r(), vs=r(), vt=r())


def random_kernel(rng: random.Random, length: int, q: int, regs: int = 8, vectors: int = 8):
    """A runnable program over a small VDM region: setup, random ops, final stores.

    VDM holds ``vectors`` input vectors at 0 and an output area at 8192; SDM[0] = q,
    SDM[1] = a scalar < q."""
    from b512.isa import CONTIGUOUS, Program
    out = [Instruction(Opcode.ALOAD, rt=1, address=0),
           Instruction(Opcode.ALOAD, rt=2, address=8192),
           Instruction(Opcode.MLOAD, rt=1, addr_reg=0, address=0),
           Instruction(Opcode.SLOAD, rt=1, addr_reg=0, address=1)]
    for v in range(regs):
        out.append(Instruction(Opcode.VLOAD, vd=v, addr_reg=1, address=512 * (v % vectors)))
    for _ in range(length):
        k = rng.randrange(6)
        d, s, t, u = (rng.randrange(regs) for _ in range(4))
        if k == 0:
            out.append(Instruction(rng.choice(sorted(VV_OPS, key=str)), vd=d, vs=s, vt=t, rm=1))
        elif k == 1:
            out.append(Instruction(rng.choice(sorted(VS_OPS, key=str)), vd=d, vs=s, rt=1, rm=1))
        elif k == 2:
            d1 = (d + 1 + rng.randrange(regs - 1)) % regs
            out.append(Instruction(Opcode.BFLY, vd=d, vd1=d1, vs=s, vt=t, vt1=u, rm=1))
        elif k == 3:
            out.append(Instruction(rng.choice(sorted(SHUFFLE_OPS, key=str)), vd=d, vs=s, vt=t))
        elif k == 4:
            slot = rng.randrange(vectors)
            mode = rng.choice([CONTIGUOUS, AddressMode(AddrMode.STRIDED, 1),
                               AddressMode(AddrMode.STRIDED_SKIP, rng.randrange(9)),
                               AddressMode(AddrMode.REPEATED, rng.randrange(10))])
            base = 512 * slot if mode.mode != AddrMode.STRIDED else 512 * (slot & ~1)
            out.append(Instruction(Opcode.VLOAD, vd=d, addr_reg=1, address=base, addr_mode=mode))
        else:
            out.append(Instruction(Opcode.VSTORE, vd=s, addr_reg=2, address=512 * rng.randrange(vectors)))
    for v in range(regs):
        out.append(Instruction(Opcode.VSTORE, vd=v, addr_reg=2, address=512 * (vectors + v)))
    return Program(tuple(out))


_KERNELS: dict = {}


def kernel(n: int, bits: int = 32, direction: str = "forward", strategy: str = "optimized"):
    """(plan, program), generated once per process."""
    from b512 import nttgen
    key = (n, bits, direction, strategy)
    if key not in _KERNELS:
        p = nttgen.plan(n, bits=bits, direction=direction, strategy=strategy)
        _KERNELS[key] = (p, nttgen.generate(p))
    return _KERNELS[key]


def small_state(q: int, seed: int, vectors: int = 8):
    """Machine state matching :func:`random_kernel`'s layout."""
    from b512.funcsim import ArchState
    rng = random.Random(seed)
    st = ArchState()
    st.write_vdm(0, [rng.randrange(q) for _ in range(512 * vectors)])
    st.write_sdm(0, [q, rng.randrange(q)])
    return st
