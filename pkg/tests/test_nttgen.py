import random
from collections import defaultdict

import pytest

from b512 import nttgen
from b512.funcsim import run_program
from b512.isa import Opcode, Program
from b512.modmath import ParameterError, find_ntt_prime
from b512.nttgen import GenOptions, instruction_census
from b512.nttgen.emit import unfuse
from b512.nttgen.scheduler import dependence_graph, is_valid_order
from b512.oracle import verify_program
from b512.perfsim import MachineConfig, effective_bases, simulate
from conftest import SLOW
from helpers import kernel


def run(p, prog, data):
    st = nttgen.prepare_state(p, data)
    run_program(prog, st)
    return st


def rand_data(p, seed):
    rng = random.Random(seed)
    return [rng.randrange(p.params.q.q) for _ in range(p.n)]


# --- plans and twiddles -----------------------------------------------------------

def test_plan_shapes():
    p = nttgen.plan(1024, bits=32)
    assert (p.stages, p.vectors) == (10, 2)
    p = nttgen.plan(65536, bits=128)
    assert (p.stages, p.vectors) == (16, 128)
    assert p.params.q.q == find_ntt_prime(128, 65536).q


@pytest.mark.parametrize("n,q", [(3000, None), (512, None), (131072, None), (1024, 97)])
def test_plan_rejects(n, q):
    with pytest.raises(ParameterError):
        nttgen.plan(n, q=q, bits=32)


def test_plan_rejects_bad_direction():
    with pytest.raises(ParameterError):
        nttgen.plan(1024, bits=32, direction="sideways")


def test_listing_structure_at_1k():
    _, prog = kernel(1024, strategy="naive")
    ops = [i.opcode for i in prog]
    # first stage: two vector loads, a broadcast twiddle, the butterfly, then the unpacks
    first = ops.index(Opcode.VLOAD)
    assert ops[first:first + 6] == [Opcode.VLOAD, Opcode.VLOAD, Opcode.VBCAST, Opcode.BFLY,
                                     Opcode.UNPKLO, Opcode.UNPKHI]


@pytest.mark.parametrize("strategy", ["naive", "optimized"])
def test_inverse_ends_with_scaling(strategy):
    p, prog = kernel(1024, direction="inverse", strategy=strategy)
    computes = [i for i in prog if i.op_class.name == "CI"]
    assert computes[-1].opcode is Opcode.VMULS and computes[-2].opcode is Opcode.VMULS
    assert p.twiddle_image.sdm[1] == p.params.n_inv
    assert p.params.n_inv * p.n % p.params.q.q == 1


def lane_twiddles(p, stage, vec):
    """The 512 values a butterfly's twiddle operand receives, read through its ref."""
    from b512.isa import gen_access_pattern
    ref = p.twiddle_ref(stage, vec)
    img = p.twiddle_image
    if ref.kind == "bcast":
        return [img.sdm[ref.offset]] * 512
    return [img.vdm[i] for i in gen_access_pattern(ref.mode, ref.offset, len(img.vdm) + 1024).tolist()]


@pytest.mark.parametrize("n", [1024, 4096])
@pytest.mark.parametrize("direction", ["forward", "inverse"])
def test_twiddles_follow_exponent_map(n, direction):
    p = nttgen.plan(n, bits=64, direction=direction)
    q = p.params.q.q
    root = p.params.omega if direction == "forward" else pow(p.params.omega, -1, q)
    for s in range(p.stages):
        for v in range(p.butterflies_per_stage):
            got = lane_twiddles(p, s, v)
            assert got == [pow(root, e, q) for e in p.twiddle_exponents(s, v)]


def test_stage0_twiddle_is_one():
    p = nttgen.plan(1024, bits=32)
    assert all(t == 1 for v in range(p.butterflies_per_stage) for t in lane_twiddles(p, 0, v))


def test_inverse_twiddles_invert_forward():
    f = nttgen.plan(2048, bits=64)
    i = nttgen.plan(2048, bits=64, direction="inverse")
    q = f.params.q.q
    for s in range(f.stages):
        fwd = sorted(pow(t, -1, q) for v in range(f.butterflies_per_stage) for t in lane_twiddles(f, s, v))
        inv = sorted(t for v in range(i.butterflies_per_stage) for t in lane_twiddles(i, s, v))
        assert fwd == inv


def test_twiddle_region_holds_exactly_what_is_read():
    for direction in ("forward", "inverse"):
        p, prog = kernel(4096, direction=direction)
        img = p.twiddle_image
        read = set()
        for s in range(p.stages):
            for v in range(p.butterflies_per_stage):
                ref = p.twiddle_ref(s, v)
                if ref.kind == "vector":
                    from b512.isa import gen_access_pattern
                    read.update(gen_access_pattern(ref.mode, ref.offset, 1 << 20).tolist())
        assert read == set(range(len(img.vdm)))


def test_manifest_round_trip(tmp_path):
    p, prog = kernel(2048, direction="inverse")
    m = nttgen.write_kernel(p, prog, tmp_path, data=rand_data(p, 0))
    assert m["n_inv"] == str(p.params.n_inv)
    assert nttgen.NttPlan.from_manifest(tmp_path / "manifest.json") == p
    assert (tmp_path / "kernel.bin").exists() and (tmp_path / "vdm.img.manifest").exists()


# --- correctness ------------------------------------------------------------------

@pytest.mark.parametrize("n", [1024, 2048, 4096])
@pytest.mark.parametrize("bits", [32, 128])
@pytest.mark.parametrize("direction", ["forward", "inverse"])
def test_optimized_matches_naive(n, bits, direction):
    p, opt = kernel(n, bits, direction)
    pn, naive = kernel(n, bits, direction, "naive")
    data = rand_data(p, n + bits)
    out_o = nttgen.read_output(p, run(p, opt, data))
    out_n = nttgen.read_output(pn, run(pn, naive, data))
    assert out_o == out_n


@pytest.mark.parametrize("strategy", ["naive", "optimized"])
def test_verify_1k_32bit(strategy):
    p, prog = kernel(1024, 32, strategy=strategy)
    assert verify_program(prog, p, trials=2).passed


@pytest.mark.parametrize("n", [1024, 4096])
@pytest.mark.parametrize("strategy", ["naive", "optimized"])
def test_forward_then_inverse_is_identity(n, strategy):
    pf, fwd = kernel(n, 64, "forward", strategy)
    pi, inv = kernel(n, 64, "inverse", strategy)
    assert pf.output_order == pi.input_order == "bit_reversed"
    data = rand_data(pf, 3)
    mid = nttgen.read_output(pf, run(pf, fwd, data))
    assert nttgen.read_output(pi, run(pi, inv, mid)) == data


def test_naive_uses_v0_to_v7():
    for n in (1024, 8192):
        for d in ("forward", "inverse"):
            _, prog = kernel(n, 32, d, "naive")
            regs = {r for i in prog for r in i.vector_reads() + i.vector_writes()}
            assert regs <= set(range(8))


@pytest.mark.parametrize("n", [1024, 4096, 16384])
@pytest.mark.parametrize("direction", ["forward", "inverse"])
@pytest.mark.parametrize("strategy", ["naive", "optimized"])
def test_no_uninitialized_register_reads(n, direction, strategy):
    _, prog = kernel(n, 32, direction, strategy)
    defined = {("a", 0)}          # a0 is the architectural zero base
    for pc, ins in enumerate(prog):
        for reg in ins.register_reads():
            assert reg in defined, f"pc {pc} reads {reg} before any write"
        defined.update(ins.register_writes())


@pytest.mark.parametrize("direction", ["forward", "inverse"])
def test_forwarding_changes_timing_only(direction):
    p = nttgen.plan(16384, bits=64, direction=direction)
    assert len(p.passes) > 1
    on = nttgen.generate(p, GenOptions(forwarding=True))
    off = nttgen.generate(p, GenOptions(forwarding=False))
    assert on != off
    data = rand_data(p, 5)
    a, b = run(p, on, data), run(p, off, data)
    assert nttgen.read_output(p, a) == nttgen.read_output(p, b)
    assert a.read_vdm(p.twiddle_base, len(p.twiddle_image.vdm)) == b.read_vdm(p.twiddle_base, len(p.twiddle_image.vdm))


def random_topological_order(preds, rng):
    succs = defaultdict(list)
    indeg = [len(ps) for ps in preds]
    for i, ps in enumerate(preds):
        for j in ps:
            succs[j].append(i)
    ready = [i for i, d in enumerate(indeg) if d == 0]
    order = []
    while ready:
        i = ready.pop(rng.randrange(len(ready)))
        order.append(i)
        for j in succs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return order


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("direction", ["forward", "inverse"])
def test_any_topological_order_gives_same_result(seed, direction):
    p, prog = kernel(1024, 32, direction)
    instrs = list(prog)
    preds = dependence_graph(instrs, effective_bases(prog))
    rng = random.Random(seed)
    order = random_topological_order(preds, rng)
    assert is_valid_order(instrs, order)
    shuffled = Program(tuple(instrs[i] for i in order))
    data = rand_data(p, seed)
    assert run(p, shuffled, data).vdm == run(p, prog, data).vdm


def test_invalid_order_detected():
    _, prog = kernel(1024, 32)
    assert not is_valid_order(list(prog), list(range(len(prog)))[::-1])


@pytest.mark.parametrize("strategy", ["naive", "optimized"])
@pytest.mark.parametrize("direction", ["forward", "inverse"])
def test_unfused_butterflies(strategy, direction):
    p, prog = kernel(2048, 64, direction, strategy)
    if strategy == "optimized":
        # leave one register free for the product
        prog = nttgen.generate(p, GenOptions(num_regs=63))
    used = {r for i in prog for r in i.vector_reads() + i.vector_writes()}
    temp = min(set(range(64)) - used)
    split = []
    for ins in prog:
        split.extend(unfuse(ins, temp) if ins.opcode is Opcode.BFLY else [ins])
    unfused = Program(tuple(split))
    assert len(unfused) > len(prog)
    assert not any(i.opcode is Opcode.BFLY for i in unfused)
    data = rand_data(p, 11)
    assert nttgen.read_output(p, run(p, unfused, data)) == nttgen.read_output(p, run(p, prog, data))


# --- census -------------------------------------------------------------------------

def test_census_empty():
    assert instruction_census(None) == {"LSI": 0, "CI": 0, "SI": 0, "total": 0}


def test_census_1k_hand_count():
    # prologue: four ALOADs and the modulus load; each of the 10 stages loads two
    # vectors and one twiddle, runs one butterfly, unpacks twice and stores twice
    _, naive = kernel(1024, 32, "forward", "naive")
    assert instruction_census(naive) == {"LSI": 5 + 10 * 5, "CI": 10, "SI": 20, "total": 85}
    # one pass over all 10 stages: load 2, 10 twiddles, store 2, and no unpack
    # after the last stage (its even/odd split is done by strided stores)
    _, opt = kernel(1024, 32)
    assert instruction_census(opt) == {"LSI": 5 + 2 + 10 + 2, "CI": 10, "SI": 18, "total": 47}


def test_census_64k():
    _, prog = kernel(65536, 128)
    c = instruction_census(prog)
    # 16 stages x 64 butterflies; 15 stages x 64 butterflies x 2 shuffles
    assert c["CI"] == 16 * 64 == 1024
    assert c["SI"] == 15 * 64 * 2 == 1920


# --- performance ----------------------------------------------------------------------

def test_optimized_is_faster_than_naive_4k():
    _, opt = kernel(4096, 128)
    _, naive = kernel(4096, 128, strategy="naive")
    assert simulate(naive).total_cycles > 1.5 * simulate(opt).total_cycles


def test_shuffle_wait_drops_at_256_hples():
    cfg = MachineConfig(num_hples=256)
    p = nttgen.plan(65536, bits=128)
    opt = nttgen.generate(p, GenOptions(config=cfg))
    _, naive = kernel(65536, 128, strategy="naive")
    before = simulate(naive, cfg).busyboard_stall_by_class["SI"]
    after = simulate(opt, cfg).busyboard_stall_by_class["SI"]
    assert before > 10 * after


def test_generation_is_deterministic():
    p = nttgen.plan(2048, bits=32)
    assert nttgen.generate(p) == nttgen.generate(p)


@pytest.mark.slow
@pytest.mark.parametrize("direction", ["forward", "inverse"])
@pytest.mark.parametrize("strategy", ["naive", "optimized"])
def test_64k_sampled_oracle(direction, strategy):
    p, prog = kernel(65536, 128, direction, strategy)
    rep = verify_program(prog, p, trials=2, sample=256)
    assert rep.passed, str(rep)


@pytest.mark.skipif(not SLOW, reason="set B512_SLOW_TESTS=1 to run")
def test_64k_round_trip():
    pf, fwd = kernel(65536, 128)
    pi, inv = kernel(65536, 128, "inverse")
    data = rand_data(pf, 1)
    mid = nttgen.read_output(pf, run(pf, fwd, data))
    assert nttgen.read_output(pi, run(pi, inv, mid)) == data
