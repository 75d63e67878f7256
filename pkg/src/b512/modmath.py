"""Exact modular arithmetic for 128-bit moduli.

Residues are plain Python ints kept fully reduced in ``[0, q)``.  Multiplication
uses Barrett reduction with a per-modulus width ``w = q.bit_length()`` so the
product of two residues never exceeds ``2*w <= 256`` bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

MAX_MODULUS_BITS = 128

# Fixed witness set; exact below 3.3e24 and overwhelmingly reliable above.
MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


class DomainError(ValueError):
    """An operand is outside the residue range of its modulus."""


class ParameterError(ValueError):
    """No valid ring parameters exist for the request."""


@dataclass(frozen=True)
class Modulus:
    q: int
    width: int = field(init=False)
    barrett_mu: int = field(init=False)

    def __post_init__(self):
        q = self.q
        if not isinstance(q, int) or q <= 2 or q % 2 == 0 or q >= 1 << MAX_MODULUS_BITS:
            raise ParameterError(f"modulus must be odd with 2 < q < 2^128, got {q!r}")
        width = q.bit_length()
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "barrett_mu", (1 << (2 * width)) // q)

    def check(self, *values: int) -> None:
        for v in values:
            if not 0 <= v < self.q:
                raise DomainError(f"residue {v} not in [0, {self.q})")

    def reduce(self, x: int) -> int:
        """Barrett-reduce ``0 <= x < q**2``."""
        if x >> (2 * self.width):
            raise DomainError("operand wider than 2*width bits")
        w = self.width
        est = ((x >> (w - 1)) * self.barrett_mu) >> (w + 1)
        r = x - est * self.q
        while r >= self.q:  # at most two corrections
            r -= self.q
        return r


def mod_add(a: int, b: int, m: Modulus) -> int:
    m.check(a, b)
    s = a + b
    return s - m.q if s >= m.q else s


def mod_sub(a: int, b: int, m: Modulus) -> int:
    m.check(a, b)
    d = a - b
    return d + m.q if d < 0 else d


def mod_mul(a: int, b: int, m: Modulus) -> int:
    m.check(a, b)
    return m.reduce(a * b)


def mod_pow(a: int, e: int, m: Modulus) -> int:
    m.check(a)
    if e < 0:
        raise DomainError("negative exponent")
    result = 1 % m.q
    base = a
    while e:
        if e & 1:
            result = m.reduce(result * base)
        base = m.reduce(base * base)
        e >>= 1
    return result


def mod_inv(a: int, m: Modulus) -> int:
    m.check(a)
    if a == 0 or math.gcd(a, m.q) != 1:
        raise DomainError(f"{a} is not invertible mod {m.q}")
    return pow(a, -1, m.q)


def is_probable_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in MR_WITNESSES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def find_ntt_prime(bit_width: int, n: int) -> Modulus:
    """Largest prime ``q < 2**bit_width`` with ``q = 1 (mod 2n)``."""
    if not 8 <= bit_width <= MAX_MODULUS_BITS:
        raise ParameterError(f"bit_width must be in [8, 128], got {bit_width}")
    if not _is_pow2(n):
        raise ParameterError(f"n must be a power of two, got {n}")
    step = 2 * n
    q = ((1 << bit_width) - 2) // step * step + 1
    while q > 2:
        if is_probable_prime(q):
            return Modulus(q)
        q -= step
    raise ParameterError(f"no prime below 2^{bit_width} congruent to 1 mod {step}")


def find_root_of_unity(n: int, m: Modulus) -> int:
    """Primitive n-th root of unity, searching generators 2, 3, 4, ... in order."""
    q = m.q
    if not _is_pow2(n) or (q - 1) % n:
        raise ParameterError(f"q={q} has no primitive {n}-th root of unity")
    if n == 1:
        return 1
    cofactor = (q - 1) // n
    for g in range(2, min(q, 1 << 16)):
        w = mod_pow(g, cofactor, m)
        # order divides n (a power of two); primitive iff w^(n/2) = -1
        if mod_pow(w, n // 2, m) == q - 1:
            return w
    raise ParameterError(f"no primitive {n}-th root of unity found mod {q}")


@dataclass(frozen=True)
class RingParams:
    n: int
    q: Modulus
    omega: int
    omega_inv: int
    n_inv: int

    @classmethod
    def create(cls, n: int, q: int | Modulus, omega: int | None = None) -> "RingParams":
        m = q if isinstance(q, Modulus) else Modulus(q)
        if not _is_pow2(n) or n < 2:
            raise ParameterError(f"n must be a power of two >= 2, got {n}")
        if omega is None:
            omega = find_root_of_unity(n, m)
        params = cls(n, m, omega, mod_inv(omega, m), mod_inv(n % m.q, m))
        params.validate()
        return params

    @classmethod
    def for_bits(cls, n: int, bits: int) -> "RingParams":
        return cls.create(n, find_ntt_prime(bits, n))

    def validate(self) -> None:
        m, n = self.q, self.n
        if mod_pow(self.omega, n, m) != 1 or mod_pow(self.omega, n // 2, m) != m.q - 1:
            raise ParameterError("omega is not a primitive n-th root of unity")
        if mod_mul(self.omega, self.omega_inv, m) != 1:
            raise ParameterError("omega_inv is not the inverse of omega")
        if mod_mul(n % m.q, self.n_inv, m) != 1:
            raise ParameterError("n_inv is not the inverse of n")

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in (
            ("n", self.n), ("q", self.q.q), ("omega", self.omega),
            ("omega_inv", self.omega_inv), ("n_inv", self.n_inv)))

    @classmethod
    def from_text(cls, text: str) -> "RingParams":
        kv = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParameterError(f"line {lineno}: expected key=value")
            kv[key.strip()] = int(value.strip())
        try:
            params = cls(kv["n"], Modulus(kv["q"]), kv["omega"], kv["omega_inv"], kv["n_inv"])
        except KeyError as e:
            raise ParameterError(f"missing parameter {e.args[0]}") from None
        params.validate()
        return params

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "RingParams":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class RnsBasis:
    moduli: tuple[Modulus, ...]
    big_q: int = field(init=False)

    def __post_init__(self):
        mods = tuple(m if isinstance(m, Modulus) else Modulus(m) for m in self.moduli)
        if not mods:
            raise ParameterError("empty RNS basis")
        for i, a in enumerate(mods):
            for b in mods[i + 1:]:
                if math.gcd(a.q, b.q) != 1:
                    raise ParameterError(f"moduli {a.q} and {b.q} are not coprime")
        object.__setattr__(self, "moduli", mods)
        object.__setattr__(self, "big_q", math.prod(m.q for m in mods))


def rns_decompose(x: int, basis: RnsBasis) -> list[int]:
    if not 0 <= x < basis.big_q:
        raise DomainError(f"{x} not in [0, Q)")
    return [x % m.q for m in basis.moduli]


def rns_reconstruct(residues, basis: RnsBasis) -> int:
    residues = list(residues)
    if len(residues) != len(basis.moduli):
        raise ValueError(f"expected {len(basis.moduli)} residues, got {len(residues)}")
    big_q = basis.big_q
    x = 0
    for r, m in zip(residues, basis.moduli):
        m.check(r)
        partial = big_q // m.q
        x += r * partial * pow(partial % m.q, -1, m.q)
    return x % big_q
