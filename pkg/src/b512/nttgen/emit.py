"""Instruction builders shared by the naive and optimized generators."""

from __future__ import annotations

from ..isa import AddressMode, AddrMode, CONTIGUOUS, Instruction, Opcode
from .plan import A_BUF0, A_BUF1, A_SCRATCH, A_TWIDDLE, A_ZERO, M_Q, S_NINV, SDM_MODULUS, SDM_N_INV, NttPlan, TwiddleRef

STRIDE2 = AddressMode(AddrMode.STRIDED, 1)


def buffer_reg(index: int) -> int:
    return A_BUF0 if index % 2 == 0 else A_BUF1


def prologue(p: NttPlan) -> list[Instruction]:
    out = [
        Instruction(Opcode.ALOAD, rt=A_BUF0, address=p.buffer_base(0)),
        Instruction(Opcode.ALOAD, rt=A_BUF1, address=p.buffer_base(1)),
        Instruction(Opcode.ALOAD, rt=A_TWIDDLE, address=p.twiddle_base),
        Instruction(Opcode.ALOAD, rt=A_SCRATCH, address=p.scratch_base),
        Instruction(Opcode.MLOAD, rt=M_Q, addr_reg=A_ZERO, address=SDM_MODULUS),
    ]
    if p.direction == "inverse":
        out.append(Instruction(Opcode.SLOAD, rt=S_NINV, addr_reg=A_ZERO, address=SDM_N_INV))
    return out


def vload(vd: int, areg: int, offset: int, mode: AddressMode = CONTIGUOUS) -> Instruction:
    return Instruction(Opcode.VLOAD, vd=vd, addr_reg=areg, address=offset, addr_mode=mode)


def vstore(vs: int, areg: int, offset: int, mode: AddressMode = CONTIGUOUS) -> Instruction:
    return Instruction(Opcode.VSTORE, vd=vs, addr_reg=areg, address=offset, addr_mode=mode)


def twiddle_load(vd: int, ref: TwiddleRef) -> Instruction:
    if ref.kind == "bcast":
        return Instruction(Opcode.VBCAST, vd=vd, addr_reg=A_ZERO, address=ref.offset)
    return vload(vd, A_TWIDDLE, ref.offset, ref.mode)


def bfly(vd: int, vd1: int, vs: int, vt: int, vt1: int) -> Instruction:
    return Instruction(Opcode.BFLY, vd=vd, vd1=vd1, vs=vs, vt=vt, vt1=vt1, rm=M_Q)


def shuffle(op: Opcode, vd: int, vs: int, vt: int) -> Instruction:
    return Instruction(op, vd=vd, vs=vs, vt=vt)


def scale(vd: int, vs: int) -> Instruction:
    return Instruction(Opcode.VMULS, vd=vd, vs=vs, rt=S_NINV, rm=M_Q)


def unfuse(instr: Instruction, temp: int) -> list[Instruction]:
    """BFLY as VMUL + VADD + VSUB through ``temp`` (must differ from the sources)."""
    if instr.opcode is not Opcode.BFLY:
        return [instr]
    if temp in (instr.vs, instr.vt, instr.vt1):
        raise ValueError("temporary register overlaps a butterfly source")
    rm = instr.rm
    out = [Instruction(Opcode.VMUL, vd=temp, vs=instr.vt, vt=instr.vt1, rm=rm)]
    if instr.vd == instr.vs:
        # keep vs alive for the subtraction
        out += [Instruction(Opcode.VSUB, vd=instr.vd1, vs=instr.vs, vt=temp, rm=rm),
                Instruction(Opcode.VADD, vd=instr.vd, vs=instr.vs, vt=temp, rm=rm)]
    else:
        out += [Instruction(Opcode.VADD, vd=instr.vd, vs=instr.vs, vt=temp, rm=rm),
                Instruction(Opcode.VSUB, vd=instr.vd1, vs=instr.vs, vt=temp, rm=rm)]
    return out
