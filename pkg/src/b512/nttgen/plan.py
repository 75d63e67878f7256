"""Size-, modulus- and direction-specific NTT lowering: stage structure,
memory layout and twiddle tables.

Forward transform (constant geometry, natural input, bit-reversed output).
Each of the k = log2(n) stages reads element pairs (i, i + n/2) for i < n/2,
applies ``(a, b, w) -> (a + w*b, a - w*b)`` and writes the two results to
positions (2i, 2i + 1).  At stage s the twiddle for pair i is
``omega ** (brv_s(i mod 2^s) * 2^(k-1-s))`` where ``brv_s`` reverses s bits.
After k stages element p of memory holds ``X[brv_k(p)]``.

Inverse transform (constant geometry, bit-reversed input, natural output).
Each stage reads pairs (2i, 2i + 1), applies the same butterfly with twiddle
``omega_inv ** ((i >> (k-1-s)) << (k-1-s))`` and writes to (i, i + n/2).  The
last stage scales by n^-1.

Vector v of a stage covers pairs 512v .. 512v + 511.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from ..funcsim import ArchState, DEFAULT_VDM_BYTES, WORD_BYTES, Region
from ..isa import VLEN, AddressMode, AddrMode, CONTIGUOUS
from ..modmath import Modulus, ParameterError, RingParams, find_ntt_prime, mod_pow

MIN_N = 1024
MAX_N = 65536
LOG_VLEN = 9
HALF = VLEN // 2

# fixed SDM words
SDM_MODULUS = 0
SDM_N_INV = 1
SDM_CONSTS = 2

# ARF registers set up by every kernel prologue
A_ZERO, A_BUF0, A_BUF1, A_TWIDDLE, A_SCRATCH = 0, 1, 2, 3, 4
M_Q = 1
S_NINV = 1


@dataclass(frozen=True)
class TwiddleRef:
    """Where a butterfly finds its 512 twiddles."""
    kind: str          # "bcast" (SDM word) or "vector" (VDM pattern)
    offset: int        # SDM word or element offset inside the twiddle region
    mode: AddressMode = CONTIGUOUS


@dataclass(frozen=True)
class TwiddleImage:
    vdm: tuple[int, ...]     # twiddle region contents
    sdm: tuple[int, ...]     # SDM words from address 0

    def corrupt(self, index: int, delta: int = 1, q: int | None = None) -> "TwiddleImage":
        vals = list(self.vdm)
        vals[index] = (vals[index] + delta) % q if q else vals[index] ^ delta
        return TwiddleImage(tuple(vals), self.sdm)


def brv(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


@dataclass(frozen=True)
class NttPlan:
    params: RingParams
    direction: str = "forward"
    strategy: str = "optimized"
    max_depth: int = 4
    scratch_vectors: int = 96
    vdm_bytes: int = DEFAULT_VDM_BYTES
    passes: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        n = self.params.n
        if n & (n - 1) or not MIN_N <= n <= MAX_N:
            raise ParameterError(f"n must be a power of two in [{MIN_N}, {MAX_N}], got {n}")
        if (self.params.q.q - 1) % (2 * n):
            raise ParameterError(f"q={self.params.q.q} is not congruent to 1 mod 2n")
        if self.direction not in ("forward", "inverse"):
            raise ParameterError(f"direction must be forward or inverse, got {self.direction!r}")
        if self.strategy not in ("naive", "optimized"):
            raise ParameterError(f"strategy must be naive or optimized, got {self.strategy!r}")
        if not 1 <= self.max_depth <= 7:
            raise ParameterError("max_depth must be in 1..7")
        object.__setattr__(self, "passes", self._split_passes())
        if self.vdm_end > self.vdm_bytes // WORD_BYTES:
            raise ParameterError(f"layout needs {self.vdm_end} VDM words, only "
                                 f"{self.vdm_bytes // WORD_BYTES} available")

    # --- shape ---------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.params.n

    @property
    def stages(self) -> int:
        return self.n.bit_length() - 1

    @property
    def vectors(self) -> int:
        return self.n // VLEN

    @property
    def vector_bits(self) -> int:
        return self.stages - LOG_VLEN

    @property
    def butterflies_per_stage(self) -> int:
        return self.vectors // 2

    @property
    def input_order(self) -> str:
        return "natural" if self.direction == "forward" else "bit_reversed"

    @property
    def output_order(self) -> str:
        return "bit_reversed" if self.direction == "forward" else "natural"

    def _split_passes(self) -> tuple[tuple[int, int], ...]:
        k = self.stages
        if self.strategy == "naive":
            return tuple((s, s + 1) for s in range(k))
        if self.vector_bits <= self.max_depth:
            return ((0, k),)
        count = -(-k // self.max_depth)
        base, extra = divmod(k, count)
        out, s = [], 0
        for i in range(count):
            d = base + (1 if i < extra else 0)
            out.append((s, s + d))
            s += d
        return tuple(out)

    # --- memory layout (element offsets) -----------------------------------------
    def buffer_base(self, index: int) -> int:
        return (index % 2) * self.n

    @property
    def input_base(self) -> int:
        return self.buffer_base(0)

    @property
    def output_base(self) -> int:
        return self.buffer_base(len(self.passes))

    @property
    def twiddle_base(self) -> int:
        return 2 * self.n

    @property
    def scratch_base(self) -> int:
        end = self.twiddle_base + len(self.twiddle_image.vdm)
        return -(-end // VLEN) * VLEN

    @property
    def vdm_end(self) -> int:
        return self.scratch_base + self.scratch_vectors * VLEN

    # --- twiddles ------------------------------------------------------------------
    def twiddle_exponents(self, stage: int, vec: int) -> list[int]:
        """Exponent of omega (forward) or omega_inv (inverse) for each lane."""
        k = self.stages
        t = k - 1 - stage
        out = []
        for lane in range(VLEN):
            i = vec * VLEN + lane
            if self.direction == "forward":
                out.append(brv(i % (1 << stage), stage) << t)
            else:
                out.append((i >> t) << t)
        return out

    @cached_property
    def _twiddle_layout(self):
        """(refs, vdm exponent table, sdm exponent table)."""
        k = self.stages
        refs: dict[tuple[int, int], TwiddleRef] = {}
        vdm_exp: list[int] = []
        sdm_exp: list[int] = []
        bcast_slot: dict[int, int] = {}

        def bcast(e: int) -> TwiddleRef:
            if e not in bcast_slot:
                bcast_slot[e] = SDM_CONSTS + len(sdm_exp)
                sdm_exp.append(e)
            return TwiddleRef("bcast", bcast_slot[e])

        half = self.butterflies_per_stage
        for s in range(k):
            t = k - 1 - s
            if self.direction == "forward":
                if s == 0:
                    ref = bcast(0)
                    for v in range(half):
                        refs[s, v] = ref
                    continue
                if s <= LOG_VLEN:
                    off = len(vdm_exp)
                    vdm_exp.extend(self.twiddle_exponents(s, 0))
                    for v in range(half):
                        refs[s, v] = TwiddleRef("vector", off)
                    continue
                period = 1 << (s - LOG_VLEN)
                offs = []
                for a in range(period):
                    offs.append(len(vdm_exp))
                    vdm_exp.extend(self.twiddle_exponents(s, a))
                for v in range(half):
                    refs[s, v] = TwiddleRef("vector", offs[v % period])
            else:
                if t >= LOG_VLEN:
                    for v in range(half):
                        refs[s, v] = bcast((v >> (t - LOG_VLEN)) << t)
                    continue
                off = len(vdm_exp)
                vdm_exp.extend(u << t for u in range(self.n >> (t + 1)))
                mode = CONTIGUOUS if t == 0 else AddressMode(AddrMode.REPEATED, t)
                for v in range(half):
                    refs[s, v] = TwiddleRef("vector", off + ((v * VLEN) >> t), mode)
        return refs, vdm_exp, sdm_exp

    def twiddle_ref(self, stage: int, vec: int) -> TwiddleRef:
        return self._twiddle_layout[0][stage, vec]

    @property
    def twiddle_root(self) -> int:
        return self.params.omega if self.direction == "forward" else self.params.omega_inv

    @cached_property
    def twiddle_image(self) -> TwiddleImage:
        _, vdm_exp, sdm_exp = self._twiddle_layout
        q: Modulus = self.params.q
        root = self.twiddle_root
        cache: dict[int, int] = {}

        def power(e: int) -> int:
            if e not in cache:
                cache[e] = mod_pow(root, e, q)
            return cache[e]

        sdm = [q.q, self.params.n_inv] + [power(e) for e in sdm_exp]
        return TwiddleImage(tuple(power(e) for e in vdm_exp), tuple(sdm))

    # --- manifest --------------------------------------------------------------------
    def manifest(self, census: dict | None = None) -> dict:
        p = self.params
        d = {
            "n": self.n,
            "q": str(p.q.q),
            "omega": str(p.omega),
            "omega_inv": str(p.omega_inv),
            "n_inv": str(p.n_inv),
            "direction": self.direction,
            "strategy": self.strategy,
            "stages": self.stages,
            "passes": [list(x) for x in self.passes],
            "input_order": self.input_order,
            "output_order": self.output_order,
            "regions": {
                "input": [self.input_base, self.n],
                "output": [self.output_base, self.n],
                "twiddles": [self.twiddle_base, len(self.twiddle_image.vdm)],
                "scratch": [self.scratch_base, self.scratch_vectors * VLEN],
                "sdm": [0, len(self.twiddle_image.sdm)],
            },
            "vdm_words": self.vdm_bytes // WORD_BYTES,
        }
        if census is not None:
            d["census"] = census
        return d

    @classmethod
    def from_manifest(cls, data: dict | str | Path) -> "NttPlan":
        if isinstance(data, (str, Path)):
            data = json.loads(Path(data).read_text())
        params = RingParams(int(data["n"]), Modulus(int(data["q"])), int(data["omega"]),
                            int(data["omega_inv"]), int(data["n_inv"]))
        params.validate()
        kw = {}
        if "max_depth" in data:
            kw["max_depth"] = data["max_depth"]
        pl = cls(params, data["direction"], data["strategy"], **kw)
        if [list(x) for x in pl.passes] != data["passes"]:
            pl = cls(params, data["direction"], data["strategy"],
                     max_depth=max(b - a for a, b in data["passes"]))
        return pl


def plan(n: int, q: int | Modulus | None = None, direction: str = "forward",
         strategy: str = "optimized", bits: int | None = None, omega: int | None = None,
         **kw) -> NttPlan:
    """Build an :class:`NttPlan`.  Give either ``q`` or ``bits`` (prime search)."""
    if n & (n - 1) or not MIN_N <= n <= MAX_N:
        raise ParameterError(f"n must be a power of two in [{MIN_N}, {MAX_N}], got {n}")
    if q is None:
        q = find_ntt_prime(bits or 128, n)
    params = RingParams.create(n, q, omega)
    return NttPlan(params, direction, strategy, **kw)


# --- state preparation --------------------------------------------------------------

def prepare_state(p: NttPlan, data, twiddles: TwiddleImage | None = None,
                  debug: bool = True) -> ArchState:
    """Fresh machine state with ``data`` (memory order) in the input buffer and
    the plan's constants loaded."""
    data = list(data)
    if len(data) != p.n:
        raise ValueError(f"expected {p.n} input values, got {len(data)}")
    tw = twiddles or p.twiddle_image
    state = ArchState(vdm_bytes=p.vdm_bytes, debug=debug)
    state.write_vdm(p.input_base, data)
    state.write_vdm(p.twiddle_base, tw.vdm)
    state.write_sdm(0, tw.sdm)
    return state


def read_output(p: NttPlan, state: ArchState) -> list[int]:
    return state.read_vdm(p.output_base, p.n)


def image_regions(p: NttPlan, data=None, twiddles: TwiddleImage | None = None) -> tuple[list[Region], list[Region]]:
    """(VDM regions, SDM regions) for writing image files."""
    tw = twiddles or p.twiddle_image
    vdm = []
    if data is not None:
        vdm.append(Region("input", p.input_base, list(data)))
    vdm.append(Region("twiddles", p.twiddle_base, list(tw.vdm)))
    return vdm, [Region("constants", 0, list(tw.sdm))]
