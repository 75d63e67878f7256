"""Brute-force reference transforms used as ground truth.

Nothing here touches the kernel generator's twiddle tables or the Barrett
code path: powers of the root come from Python's built-in ``pow`` and every
product is reduced with ``%``.  The direct O(n^2) DFT packs many input
vectors into one big integer per coefficient so one multiply-accumulate pass
serves a whole batch.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field
from operator import itemgetter, mul
from typing import Sequence

import numpy as np

from .modmath import DomainError, RingParams


@dataclass(frozen=True)
class PolyVec:
    coeffs: tuple[int, ...]
    params: RingParams

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) != self.params.n:
            raise ValueError(f"expected {self.params.n} coefficients, got {len(coeffs)}")
        q = self.params.q.q
        if any(not 0 <= c < q for c in coeffs):
            raise DomainError("coefficient outside [0, q)")

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, i):
        return self.coeffs[i]


def _power_table(root: int, n: int, q: int) -> list[int]:
    table = [1] * n
    for e in range(1, n):
        table[e] = table[e - 1] * root % q
    return table


def dft_batch(vectors: Sequence[Sequence[int]], root: int, q: int,
              points: Sequence[int] | None = None) -> list[list[int]]:
    """``out[t][i] = sum_j vectors[t][j] * root^(j*k_i) mod q`` for k_i in ``points``."""
    vectors = [list(v) for v in vectors]
    if not vectors:
        return []
    n = len(vectors[0])
    if n & (n - 1) or any(len(v) != n for v in vectors):
        raise ValueError("vectors must share a power-of-two length")
    points = list(range(n)) if points is None else list(points)
    powers = _power_table(root, n, q)
    slot = 2 * q.bit_length() + n.bit_length() + 1
    mask = (1 << slot) - 1
    packed = [0] * n
    for t, v in enumerate(vectors):
        shift = slot * t
        for j, c in enumerate(v):
            if c:
                packed[j] |= c << shift
    ramp = np.arange(n, dtype=np.int64)
    out = [[0] * len(points) for _ in vectors]
    for i, k in enumerate(points):
        idx = (ramp * (k % n)) & (n - 1)
        row = itemgetter(*idx.tolist())(powers) if n > 1 else (powers[0],)
        acc = sum(map(mul, packed, row))
        for t in range(len(vectors)):
            out[t][i] = ((acc >> (slot * t)) & mask) % q
    return out


def _coerce(x, params: RingParams | None) -> PolyVec:
    if isinstance(x, PolyVec):
        return x
    if params is None:
        raise TypeError("params required for a plain coefficient list")
    return PolyVec(tuple(x), params)


def ntt_reference(x: PolyVec | Sequence[int], params: RingParams | None = None) -> PolyVec:
    """``y[k] = sum_j x[j] * omega^(j*k) mod q`` in natural order."""
    x = _coerce(x, params)
    p = x.params
    return PolyVec(tuple(dft_batch([x.coeffs], p.omega, p.q.q)[0]), p)


def intt_reference(y: PolyVec | Sequence[int], params: RingParams | None = None) -> PolyVec:
    """``x[j] = n^-1 * sum_k y[k] * omega^(-j*k) mod q``."""
    y = _coerce(y, params)
    p = y.params
    q = p.q.q
    n_inv = pow(p.n, -1, q)
    raw = dft_batch([y.coeffs], pow(p.omega, -1, q), q)[0]
    return PolyVec(tuple(v * n_inv % q for v in raw), p)


def ntt_reference_batch(xs: Sequence[Sequence[int]], params: RingParams, inverse: bool = False,
                        points: Sequence[int] | None = None) -> list[list[int]]:
    q = params.q.q
    if not inverse:
        return dft_batch(xs, params.omega, q, points)
    n_inv = pow(params.n, -1, q)
    raw = dft_batch(xs, pow(params.omega, -1, q), q, points)
    return [[v * n_inv % q for v in row] for row in raw]


def polymul_reference(a: PolyVec, b: PolyVec, negacyclic: bool = False) -> PolyVec:
    """Schoolbook product mod (x^n - 1), or mod (x^n + 1) when ``negacyclic``."""
    if a.params != b.params:
        raise ValueError("operands use different ring parameters")
    p = a.params
    n, q = p.n, p.q.q
    wrap = -1 if negacyclic else 1
    acc = [0] * n
    for i, ai in enumerate(a.coeffs):
        if not ai:
            continue
        for j, bj in enumerate(b.coeffs):
            k = i + j
            if k >= n:
                acc[k - n] += wrap * ai * bj
            else:
                acc[k] += ai * bj
    return PolyVec(tuple(c % q for c in acc), p)


def _psi(params: RingParams) -> int:
    """A square root of omega that is a primitive 2n-th root of unity."""
    q, n = params.q.q, params.n
    if (q - 1) % (2 * n):
        raise DomainError(f"q={q} has no primitive {2 * n}-th root of unity")
    cof = (q - 1) // (2 * n)
    for g in range(2, 1 << 16):
        psi = pow(g, cof, q)
        if pow(psi, n, q) == q - 1:
            # rescale so psi^2 == omega exactly
            for e in range(1, 2 * n, 2):
                cand = pow(psi, e, q)
                if cand * cand % q == params.omega:
                    return cand
    raise DomainError("no 2n-th root of unity squares to omega")


def polymul_ntt(a: PolyVec, b: PolyVec, negacyclic: bool = False) -> PolyVec:
    """Product via transform, pointwise multiply and inverse transform."""
    p = a.params
    q, n = p.q.q, p.n
    if negacyclic:
        psi = _psi(p)
        tw = _power_table(psi, n, q)
        a = PolyVec(tuple(c * t % q for c, t in zip(a.coeffs, tw)), p)
        b = PolyVec(tuple(c * t % q for c, t in zip(b.coeffs, tw)), p)
    fa, fb = ntt_reference_batch([a.coeffs, b.coeffs], p)
    prod = intt_reference(PolyVec(tuple(x * y % q for x, y in zip(fa, fb)), p))
    if not negacyclic:
        return prod
    untw = _power_table(pow(_psi(p), -1, q), n, q)
    return PolyVec(tuple(c * t % q for c, t in zip(prod.coeffs, untw)), p)


# --- kernel verification ----------------------------------------------------------------

@dataclass
class Mismatch:
    trial: int
    index: int
    vector: int
    lane: int
    expected: int
    got: int

    def __str__(self):
        return (f"trial {self.trial}: output element {self.index} (vector {self.vector}, lane "
                f"{self.lane}) expected {self.expected}, got {self.got}")


@dataclass
class VerifyReport:
    passed: bool
    trials: int
    checked_points: int
    mismatch: Mismatch | None = None
    notes: list[str] = field(default_factory=list)

    def __str__(self):
        head = "PASS" if self.passed else "FAIL"
        text = f"{head}: {self.trials} trial(s), {self.checked_points} output points checked"
        if self.mismatch:
            text += f"\n  first mismatch: {self.mismatch}"
        for note in self.notes:
            text += f"\n  note: {note}"
        return text

    def to_dict(self) -> dict:
        d = {"passed": self.passed, "trials": self.trials, "checked_points": self.checked_points,
             "notes": self.notes}
        if self.mismatch:
            d["mismatch"] = self.mismatch.__dict__
        return d


def bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def verify_program(program, plan, trials: int = 3, seed: int = 0, twiddles=None,
                   sample: int | None = None) -> VerifyReport:
    """Run ``program`` on random inputs in the functional simulator and compare
    against the direct transform, through the plan's input/output orderings.

    ``sample`` limits the comparison to that many random output points per trial
    (for very large n); ``None`` checks every point."""
    from . import nttgen
    from .funcsim import run_program

    if trials <= 0:
        msg = "zero trials requested; nothing was checked"
        warnings.warn(msg, stacklevel=2)
        return VerifyReport(True, 0, 0, notes=[msg])
    params = plan.params
    n, q = params.n, params.q.q
    bits = n.bit_length() - 1
    rng = random.Random(seed)
    inverse = plan.direction == "inverse"
    checked = 0
    for trial in range(trials):
        logical = [rng.randrange(q) for _ in range(n)]
        if plan.input_order == "bit_reversed":
            memory_in = [logical[bit_reverse(i, bits)] for i in range(n)]
        else:
            memory_in = logical
        state = nttgen.prepare_state(plan, memory_in, twiddles=twiddles)
        run_program(program, state)
        got = nttgen.read_output(plan, state)
        if sample is None or sample >= n:
            mem_points = list(range(n))
        else:
            mem_points = sorted(rng.sample(range(n), sample))
        if plan.output_order == "bit_reversed":
            logical_points = [bit_reverse(i, bits) for i in mem_points]
        else:
            logical_points = mem_points
        expected = ntt_reference_batch([logical], params, inverse, logical_points)[0]
        checked += len(mem_points)
        for idx, want in zip(mem_points, expected):
            if got[idx] != want:
                mm = Mismatch(trial, idx, idx // 512, idx % 512, want, got[idx])
                return VerifyReport(False, trial + 1, checked, mm)
    notes = [] if sample is None or sample >= n else [f"sampled {sample} of {n} points per trial"]
    return VerifyReport(True, trials, checked, notes=notes)
