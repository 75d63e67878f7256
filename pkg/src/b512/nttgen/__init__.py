"""NTT kernel generation for B512."""

from __future__ import annotations

import json
from pathlib import Path

from ..funcsim import save_image
from ..isa import Program
from .naive import gen_naive
from .optimized import GenOptions, gen_optimized
from .plan import (
    NttPlan, TwiddleImage, TwiddleRef, brv, image_regions, plan, prepare_state, read_output,
)

__all__ = [
    "GenOptions", "NttPlan", "TwiddleImage", "TwiddleRef", "brv", "gen_naive", "gen_optimized",
    "gen_twiddles", "generate", "image_regions", "instruction_census", "plan", "prepare_state",
    "read_output", "write_kernel",
]


def gen_twiddles(p: NttPlan) -> TwiddleImage:
    return p.twiddle_image


def instruction_census(program: Program | None) -> dict[str, int]:
    counts = {"LSI": 0, "CI": 0, "SI": 0}
    for instr in program or ():
        counts[instr.op_class.name] += 1
    counts["total"] = counts["LSI"] + counts["CI"] + counts["SI"]
    return counts


def generate(p: NttPlan, options: GenOptions | None = None) -> Program:
    if p.strategy == "naive":
        return gen_naive(p)
    return gen_optimized(p, options)


def write_kernel(p: NttPlan, program: Program, out_dir: str | Path, data=None) -> dict:
    """Write program (binary and text), images and manifest into ``out_dir``."""
    from ..assembler import disassemble

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    program.save(out / "kernel.bin")
    (out / "kernel.s").write_text(disassemble(program))
    vdm, sdm = image_regions(p, data)
    save_image(out / "vdm.img", vdm)
    save_image(out / "sdm.img", sdm)
    manifest = p.manifest(instruction_census(program))
    manifest["files"] = {"program": "kernel.bin", "assembly": "kernel.s",
                         "vdm_image": "vdm.img", "sdm_image": "sdm.img"}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest

