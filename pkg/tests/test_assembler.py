import random

import pytest

from b512.assembler import AssemblyError, assemble, disassemble, format_instruction
from b512.isa import AddressMode, AddrMode, Instruction, Opcode, Program
from helpers import random_instruction


def test_listing_style_vaddmod():
    p = assemble("vaddmod v58, v60, v59, m1")
    assert p[0] == Instruction(Opcode.VADD, vd=58, vs=60, vt=59, rm=1)


def test_aliases_and_modes():
    p = assemble("""
        vimulmod v1, v2, v3, m1
        vstores v21, a2, 1, strided, 1   ; strided store
        vbcast v19, a3, 1
    """)
    assert p[0].opcode is Opcode.VMUL
    assert p[1].addr_mode == AddressMode(AddrMode.STRIDED, 1)
    assert p[2] == Instruction(Opcode.VBCAST, vd=19, addr_reg=3, address=1)


def test_empty_program():
    with pytest.raises(AssemblyError, match="empty program"):
        assemble("")
    with pytest.raises(AssemblyError, match="empty program"):
        assemble("; only a comment\n\n")


@pytest.mark.parametrize("src,line", [
    ("vload v1, a0, 0\nvfoo v1", 2),
    ("vaddmod v64, v1, v2, m1", 1),
    ("vaddmod v1, v2, m1", 1),
    ("vload v1, a0, x", 1),
    ("\n\nvload v1, a0, 0, diagonal, 1", 3),
    ("vload v1, a0, 0, strided, 10", 1),
    ("vload v1, a0, 2000000", 1),
    ("a: vload v1, a0, 0\na: vload v1, a0, 0", 2),
    ("vaddmod v1, v2, s3, m1", 1),
])
def test_errors_carry_line_numbers(src, line):
    with pytest.raises(AssemblyError) as e:
        assemble(src)
    assert e.value.lineno == line
    assert str(e.value).startswith(f"line {line}:")


def test_labels():
    p = assemble("start: vload v1, a0, 0\nmid:\n  vstore v1, a0, 512\nend:")
    assert p.labels == {"start": 0, "mid": 1, "end": 2}
    assert assemble(disassemble(p)).labels == p.labels


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_disassemble_round_trip(seed):
    rng = random.Random(seed)
    prog = Program(tuple(random_instruction(rng) for _ in range(2000)))
    text = disassemble(prog)
    again = assemble(text)
    assert again.to_bytes() == prog.to_bytes()
    assert disassemble(again) == text


def test_every_instruction_formats_and_parses():
    rng = random.Random(9)
    for _ in range(5000):
        i = random_instruction(rng)
        assert assemble(format_instruction(i))[0] == i
