"""Text assembly for B512 programs.

One instruction per line, ``mnemonic op, op, ...``.  ``;`` starts a comment and
``name:`` defines a label.  Register operands carry a file prefix (``v``, ``s``,
``a``, ``m``)::

    vload      v60, a1, 0                 ; contiguous
    vstore     v21, a2, 1, strided, 1     ; every other element
    vbroadcast v19, a3, 1
    bfly       v10, v11, v0, v1, v2, m1   ; v10 = v0 + v1*v2, v11 = v0 - v1*v2
    vunpacklo  v56, v58, v57
"""

from __future__ import annotations

import re

from .isa import AddressMode, AddrMode, Instruction, Opcode, Program, EncodingError

_ALIASES = {
    "vimulmod": "vmulmod",
    "vstores": "vstore",
    "vbcast": "vbroadcast",
}
_MNEMONICS = {op.mnemonic: op for op in Opcode}

_MODE_NAMES = {
    "contiguous": AddrMode.CONTIGUOUS,
    "strided": AddrMode.STRIDED,
    "skip": AddrMode.STRIDED_SKIP,
    "strided_skip": AddrMode.STRIDED_SKIP,
    "repeat": AddrMode.REPEATED,
    "repeated": AddrMode.REPEATED,
}
_CANONICAL_MODE = {
    AddrMode.CONTIGUOUS: "contiguous",
    AddrMode.STRIDED: "strided",
    AddrMode.STRIDED_SKIP: "skip",
    AddrMode.REPEATED: "repeat",
}

# operand kinds per opcode: v/s/a/m registers, i = immediate
_SIGNATURES = {
    Opcode.VLOAD: ("vd:v", "addr_reg:a", "address:i"),
    Opcode.VSTORE: ("vd:v", "addr_reg:a", "address:i"),
    Opcode.VBCAST: ("vd:v", "addr_reg:a", "address:i"),
    Opcode.SLOAD: ("rt:s", "addr_reg:a", "address:i"),
    Opcode.MLOAD: ("rt:m", "addr_reg:a", "address:i"),
    Opcode.ALOAD: ("rt:a", "address:i"),
    Opcode.BFLY: ("vd:v", "vd1:v", "vs:v", "vt:v", "vt1:v", "rm:m"),
}
for _op in (Opcode.VADD, Opcode.VSUB, Opcode.VMUL):
    _SIGNATURES[_op] = ("vd:v", "vs:v", "vt:v", "rm:m")
for _op in (Opcode.VADDS, Opcode.VSUBS, Opcode.VMULS):
    _SIGNATURES[_op] = ("vd:v", "vs:v", "rt:s", "rm:m")
for _op in (Opcode.UNPKLO, Opcode.UNPKHI, Opcode.PKLO, Opcode.PKHI):
    _SIGNATURES[_op] = ("vd:v", "vs:v", "vt:v")

_LABEL_RE = re.compile(r"^([A-Za-z_][\w.]*):")


class AssemblyError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _parse_int(tok: str) -> int:
    return int(tok, 0)


def _parse_operand(tok: str, kind: str, lineno: int) -> int:
    if kind == "i":
        try:
            return _parse_int(tok)
        except ValueError:
            raise AssemblyError(lineno, f"expected an integer, got {tok!r}") from None
    if len(tok) < 2 or tok[0].lower() != kind or not tok[1:].isdigit():
        raise AssemblyError(lineno, f"expected a {kind}-register, got {tok!r}")
    idx = int(tok[1:])
    if idx >= 64:
        raise AssemblyError(lineno, f"register {tok} out of range (0..63)")
    return idx


def assemble_line(line: str, lineno: int = 1) -> Instruction | None:
    text = line.split(";", 1)[0].strip()
    if not text:
        return None
    parts = text.split(None, 1)
    name = parts[0].lower()
    name = _ALIASES.get(name, name)
    op = _MNEMONICS.get(name)
    if op is None:
        raise AssemblyError(lineno, f"unknown mnemonic {parts[0]!r}")
    operands = [t.strip() for t in parts[1].split(",")] if len(parts) > 1 else []
    if any(not t for t in operands):
        raise AssemblyError(lineno, "empty operand")
    sig = _SIGNATURES[op]
    extra = operands[len(sig):]
    if len(operands) < len(sig) or (extra and not (op in (Opcode.VLOAD, Opcode.VSTORE) and len(extra) == 2)):
        raise AssemblyError(lineno, f"{name} expects {len(sig)} operands: {', '.join(s.split(':')[0] for s in sig)}")
    kw = {}
    for tok, spec in zip(operands, sig):
        field_name, kind = spec.split(":")
        kw[field_name] = _parse_operand(tok, kind, lineno)
    if extra:
        mode = _MODE_NAMES.get(extra[0].lower())
        if mode is None:
            raise AssemblyError(lineno, f"unknown addressing mode {extra[0]!r}")
        try:
            kw["addr_mode"] = AddressMode(mode, _parse_int(extra[1]))
        except (ValueError, EncodingError) as e:
            raise AssemblyError(lineno, str(e)) from None
    instr = Instruction(op, **kw)
    try:
        instr.validate()
    except EncodingError as e:
        raise AssemblyError(lineno, str(e)) from None
    return instr


def assemble(source: str) -> Program:
    instrs: list[Instruction] = []
    labels: dict[str, int] = {}
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        while (m := _LABEL_RE.match(line)):
            label = m.group(1)
            if label in labels:
                raise AssemblyError(lineno, f"duplicate label {label!r}")
            labels[label] = len(instrs)
            line = line[m.end():].strip()
        instr = assemble_line(line, lineno)
        if instr is not None:
            instrs.append(instr)
    if not instrs:
        raise AssemblyError(0, "empty program")
    return Program(tuple(instrs), labels)


def format_instruction(instr: Instruction) -> str:
    op = instr.opcode
    ops = []
    for spec in _SIGNATURES[op]:
        field_name, kind = spec.split(":")
        val = getattr(instr, field_name)
        ops.append(str(val) if kind == "i" else f"{kind}{val}")
    am = instr.addr_mode
    if op in (Opcode.VLOAD, Opcode.VSTORE) and (am.mode != AddrMode.CONTIGUOUS or am.value):
        ops += [_CANONICAL_MODE[am.mode], str(am.value)]
    return f"{op.mnemonic:<11}{', '.join(ops)}"


def disassemble(program: Program) -> str:
    by_index: dict[int, list[str]] = {}
    for label, idx in program.labels.items():
        by_index.setdefault(idx, []).append(label)
    out = []
    for i, instr in enumerate(program.instructions):
        for label in by_index.get(i, ()):
            out.append(f"{label}:")
        out.append("    " + format_instruction(instr))
    for label in by_index.get(len(program), ()):
        out.append(f"{label}:")
    return "\n".join(out) + "\n"
