import random

import pytest

from b512.assembler import assemble
from b512.funcsim import (
    ArchState, Region, SimulationError, load_image, pkhi, pklo, run_program, save_image, unpkhi,
    unpklo,
)
from b512.isa import AddressFault, AddressMode, AddrMode, Instruction, Opcode, Program
from b512.modmath import find_ntt_prime
from b512.nttgen.emit import unfuse
from helpers import random_kernel, small_state

Q = find_ntt_prime(60, 1024).q


def rand_vec(rng, q=Q):
    return [rng.randrange(q) for _ in range(512)]


def test_unpklo_formula():
    vs = [("s", k) for k in range(512)]
    vt = [("t", k) for k in range(512)]
    out = unpklo(vs, vt)
    assert out[:6] == [("s", 0), ("t", 0), ("s", 1), ("t", 1), ("s", 2), ("t", 2)]
    for k in range(256):
        assert out[2 * k] == vs[k] and out[2 * k + 1] == vt[k]
    hi = unpkhi(vs, vt)
    for k in range(256):
        assert hi[2 * k] == vs[256 + k] and hi[2 * k + 1] == vt[256 + k]


def test_pack_formulas():
    vs, vt = list(range(512)), list(range(1000, 1512))
    lo, hi = pklo(vs, vt), pkhi(vs, vt)
    for k in range(256):
        assert lo[k] == vs[2 * k] and lo[256 + k] == vt[2 * k]
        assert hi[k] == vs[2 * k + 1] and hi[256 + k] == vt[2 * k + 1]


def test_pack_unpack_inverse():
    rng = random.Random(1)
    a, b = rand_vec(rng), rand_vec(rng)
    lo, hi = pklo(a, b), pkhi(a, b)
    assert unpklo(lo, hi) == a and unpkhi(lo, hi) == b
    u, v = unpklo(a, b), unpkhi(a, b)
    assert pklo(u, v) == a and pkhi(u, v) == b


@pytest.mark.parametrize("pair", [(unpklo, unpkhi), (pklo, pkhi)])
def test_shuffle_pairs_are_bijections(pair):
    vs, vt = list(range(512)), list(range(512, 1024))
    out = pair[0](vs, vt) + pair[1](vs, vt)
    assert sorted(out) == list(range(1024))


def _machine(*vectors, q=Q, scalar=0):
    st = ArchState(vdm_bytes=1 << 16)
    for i, v in enumerate(vectors):
        st.write_vdm(512 * i, v)
    st.write_sdm(0, [q, scalar])
    pre = [Instruction(Opcode.MLOAD, rt=1, address=0), Instruction(Opcode.SLOAD, rt=1, address=1)]
    pre += [Instruction(Opcode.VLOAD, vd=i, address=512 * i) for i in range(len(vectors))]
    return st, pre


def test_bfly_with_unit_twiddles():
    rng = random.Random(2)
    a, b = rand_vec(rng), rand_vec(rng)
    st, pre = _machine(a, b, [1] * 512)
    run_program(Program(tuple(pre + [Instruction(Opcode.BFLY, vd=10, vd1=11, vs=0, vt=1, vt1=2, rm=1)])), st)
    assert st.vrf[10] == [(x + y) % Q for x, y in zip(a, b)]
    assert st.vrf[11] == [(x - y) % Q for x, y in zip(a, b)]


@pytest.mark.parametrize("seed", range(5))
def test_bfly_equals_mul_add_sub(seed):
    rng = random.Random(seed)
    q = rng.choice([Q, find_ntt_prime(128, 1024).q, find_ntt_prime(32, 1024).q])
    a, b, w = rand_vec(rng, q), rand_vec(rng, q), rand_vec(rng, q)
    bf = Instruction(Opcode.BFLY, vd=5, vd1=6, vs=0, vt=1, vt1=2, rm=1)
    st1, pre = _machine(a, b, w, q=q)
    run_program(Program(tuple(pre + [bf])), st1)
    st2, pre = _machine(a, b, w, q=q)
    run_program(Program(tuple(pre + unfuse(bf, 40))), st2)
    assert st1.vrf[5] == st2.vrf[5] and st1.vrf[6] == st2.vrf[6]
    t = [x * y % q for x, y in zip(b, w)]
    assert st1.vrf[5] == [(x + y) % q for x, y in zip(a, t)]
    assert st1.vrf[6] == [(x - y) % q for x, y in zip(a, t)]


def test_scalar_forms():
    rng = random.Random(3)
    a = rand_vec(rng)
    s = rng.randrange(Q)
    st, pre = _machine(a, scalar=s)
    body = [Instruction(op, vd=10 + k, vs=0, rt=1, rm=1)
            for k, op in enumerate((Opcode.VADDS, Opcode.VSUBS, Opcode.VMULS))]
    body.append(Instruction(Opcode.VBCAST, vd=20, address=1))
    run_program(Program(tuple(pre + body)), st)
    assert st.vrf[10] == [(x + s) % Q for x in a]
    assert st.vrf[11] == [(x - s) % Q for x in a]
    assert st.vrf[12] == [x * s % Q for x in a]
    assert st.vrf[20] == [s] * 512


@pytest.mark.parametrize("seed", range(10))
def test_ci_results_reduced(seed):
    rng = random.Random(seed)
    q = find_ntt_prime(rng.choice([16, 32, 64, 128]), 1024).q
    prog = random_kernel(rng, 60, q)
    st = run_program(prog, small_state(q, seed))
    for v in range(8):
        assert max(st.vrf[v]) < q


def test_load_store_identity():
    rng = random.Random(4)
    st = ArchState(vdm_bytes=1 << 16)
    data = [rng.randrange(1 << 128) for _ in range(2048)]
    st.write_vdm(0, data)
    before = st.dump_vdm()
    prog = assemble("vload v3, a0, 512\nvstore v3, a0, 512\n"
                    "vload v4, a0, 0, strided, 1\nvstore v4, a0, 0, strided, 1")
    run_program(prog, st)
    assert st.dump_vdm() == before


@pytest.mark.parametrize("mode,v", [(AddrMode.STRIDED, 2), (AddrMode.STRIDED_SKIP, 3),
                                    (AddrMode.REPEATED, 4)])
def test_vector_access_modes(mode, v):
    from b512.isa import gen_access_pattern
    st = ArchState(vdm_bytes=1 << 16)
    st.write_vdm(0, list(range(4096)))
    am = AddressMode(mode, v)
    run_program(Program((Instruction(Opcode.ALOAD, rt=5, address=100),
                         Instruction(Opcode.VLOAD, vd=1, addr_reg=5, address=7, addr_mode=am))), st)
    assert st.vrf[1] == gen_access_pattern(am, 107).tolist()


def test_memory_image_helpers():
    st = ArchState(vdm_bytes=1 << 14)
    assert st.read_vdm(0, 4) == [0, 0, 0, 0]             # zero fill
    st.write_vdm(10, [1, 2, (1 << 128) - 1])
    assert st.read_vdm(10, 3) == [1, 2, (1 << 128) - 1]
    part = st.dump_vdm(11, 2)
    assert len(part) == 32 and part[:16] == (2).to_bytes(16, "little")
    st.load_vdm(100, part)
    assert st.read_vdm(100, 2) == [2, (1 << 128) - 1]
    with pytest.raises(AddressFault):
        st.read_vdm(st.vdm_words - 1, 2)
    with pytest.raises(AddressFault):
        st.write_vdm(-1, [0])
    with pytest.raises(ValueError):
        st.write_vdm(0, [1 << 128])
    with pytest.raises(ValueError):
        ArchState(vdm_bytes=64 << 20)


def test_image_files(tmp_path):
    regions = [Region("a", 0, [1, 2, 3]), Region("b", 4096, [5] * 10)]
    save_image(tmp_path / "x.img", regions)
    assert (tmp_path / "x.img").stat().st_size == 13 * 16
    assert load_image(tmp_path / "x.img") == regions
    (tmp_path / "x.img.manifest").write_text("a 0 3\nb 4096 11\n")
    with pytest.raises(ValueError):
        load_image(tmp_path / "x.img")


def test_domain_fault_in_debug_mode():
    st, pre = _machine([Q] * 512, [0] * 512)
    prog = Program(tuple(pre + [Instruction(Opcode.VADD, vd=3, vs=0, vt=1, rm=1)]))
    with pytest.raises(SimulationError) as e:
        run_program(prog, st)
    assert e.value.pc == len(pre) and "modulus" in str(e.value)
    st, _ = _machine([Q] * 512, [0] * 512)
    st.debug = False
    run_program(prog, st)


def test_faults_carry_pc():
    prog = assemble("aload a1, 1048575\nvload v1, a1, 0")
    with pytest.raises(SimulationError) as e:
        run_program(prog, ArchState())
    assert e.value.pc == 1 and isinstance(e.value.cause, AddressFault)
    with pytest.raises(SimulationError):
        run_program(assemble("vaddmod v1, v2, v3, m9"), ArchState())
