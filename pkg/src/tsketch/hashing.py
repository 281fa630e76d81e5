"""Seeded k-wise independent hashing and hierarchical seed derivation.

Hash values are degree-(k-1) polynomials over the Mersenne prime
``P = 2**61 - 1``.  Products are formed from 32-bit limbs so everything runs
in numpy ``uint64`` without 128-bit integers, and vectorizes over both the
inputs and a leading batch of independently seeded functions.

A 61-bit hash value ``v`` is mapped to ``[0, m)`` by multiply-shift,
``(v * m) >> 61``.  The bias is below ``m / 2**61``, i.e. under ``2**-45``
for ``m <= 2**16``.

Seeds are 64-bit integers derived from a master seed and a path of
``(role, level, index)`` triples through the splitmix64 finalizer; nothing
depends on Python's salted ``hash``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

MERSENNE_61 = (1 << 61) - 1
_P = np.uint64(MERSENNE_61)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LEVEL_MUL = np.uint64(0xD6E8FEB86659FD93)
_INDEX_MUL = np.uint64(0xA0761D6478BD642F)

DEFAULT_SEED = 0x5EED0001


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def mix64(x) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 arrays."""
    z = _u64(x)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def stream(seeds, counters) -> np.ndarray:
    """Counter-based 64-bit random words: word ``c`` of the stream keyed by ``seed``.

    Broadcasts ``seeds`` against ``counters``.
    """
    s = _u64(seeds)
    c = _u64(counters)
    with np.errstate(over="ignore"):
        return mix64(s + (c + np.uint64(1)) * _GOLDEN)


def uniform_ints(words, bound) -> np.ndarray:
    """Map 64-bit random words to ``[0, bound)`` by multiply-shift on the top 32 bits."""
    top = _u64(words) >> np.uint64(32)
    return ((top * _u64(bound)) >> np.uint64(32)).astype(np.int64)


def random_signs(words) -> np.ndarray:
    return 1.0 - 2.0 * (_u64(words) >> np.uint64(63)).astype(np.float64)


def _tag_hash(tag: str) -> np.uint64:
    # FNV-1a, stable across platforms and interpreter runs
    h = 0xCBF29CE484222325
    for byte in tag.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(h)


def derive_values(parent, role: str, level: int, index: int) -> np.ndarray:
    """Child seed values for the path step ``(role, level, index)``.

    ``parent`` (and ``index``) may be arrays; the step broadcasts, which is
    how a batch of independent trials is seeded.
    """
    with np.errstate(over="ignore"):
        step = mix64(
            _tag_hash(role)
            ^ (_u64(level) * _LEVEL_MUL)
            ^ mix64(_u64(index) * _INDEX_MUL + _GOLDEN)
        )
        return mix64(_u64(parent) ^ step)


@dataclass(frozen=True)
class SeedPath:
    """A master seed plus the sequence of derivation steps leading to one instance."""

    master: int = DEFAULT_SEED
    path: tuple = field(default_factory=tuple)

    def derive(self, role: str, level: int = 0, index: int = 0) -> "SeedPath":
        return SeedPath(self.master, self.path + ((role, int(level), int(index)),))

    @property
    def value(self) -> int:
        v = mix64(np.uint64(self.master & 0xFFFFFFFFFFFFFFFF))
        for role, level, index in self.path:
            v = derive_values(v, role, level, index)
        return int(v)


def derive_seed(parent: SeedPath, role: str, level: int, index: int) -> SeedPath:
    return parent.derive(role, level, index)


SeedLike = Union[SeedPath, int, np.ndarray]


def seed_values(seed: SeedLike) -> np.ndarray:
    """Normalize a seed argument to a uint64 array (shape ``()`` for one instance).

    Python ints are master seeds; numpy ``uint64`` scalars and arrays are
    already-derived seed values (as produced by :func:`trial_seeds`).
    """
    if isinstance(seed, SeedPath):
        return np.asarray(seed.value, dtype=np.uint64)
    if isinstance(seed, np.uint64):
        return np.asarray(seed)
    if isinstance(seed, (int, np.integer)):
        return np.asarray(SeedPath(int(seed)).value, dtype=np.uint64)
    arr = np.asarray(seed)
    if arr.dtype != np.uint64:
        raise TypeError("batched seeds must be a uint64 array of derived seed values")
    return arr


def trial_seeds(master: SeedLike, trials: int, start: int = 0) -> np.ndarray:
    """Seed values for ``trials`` independent trials under ``master``."""
    base = seed_values(master)
    return derive_values(base[..., None], "trial", 0, np.arange(start, start + trials))


def mulmod61(a, b) -> np.ndarray:
    """``a * b mod (2**61 - 1)`` for uint64 operands below ``2**61``."""
    a = _u64(a)
    b = _u64(b)
    a_hi, a_lo = a >> np.uint64(32), a & _MASK32
    b_hi, b_lo = b >> np.uint64(32), b & _MASK32
    with np.errstate(over="ignore"):
        # 2**64 = 8 (mod P)
        high = (a_hi * b_hi) << np.uint64(3)
        mid = a_hi * b_lo + a_lo * b_hi
        # mid * 2**32 = (mid >> 29) * 2**61 + (mid & (2**29-1)) * 2**32
        mid_part = (mid >> np.uint64(29)) + ((mid & _MASK29) << np.uint64(32))
        low = a_lo * b_lo
        low = (low & _P) + (low >> np.uint64(61))
        s = high + mid_part + low
    s = (s & _P) + (s >> np.uint64(61))
    with np.errstate(over="ignore"):
        return np.where(s >= _P, s - _P, s)


def _addmod61(a, b) -> np.ndarray:
    s = _u64(a) + _u64(b)
    with np.errstate(over="ignore"):
        return np.where(s >= _P, s - _P, s)


def reduce_range(values, m) -> np.ndarray:
    """Multiply-shift ``(v * m) >> 61`` for 61-bit ``v`` and ``m < 2**32``."""
    v = _u64(values)
    m = _u64(m)
    hi, lo = v >> np.uint64(32), v & _MASK32
    with np.errstate(over="ignore"):
        acc = hi * m + ((lo * m) >> np.uint64(32))
    return (acc >> np.uint64(29)).astype(np.int64)


@dataclass(frozen=True)
class KWiseHash:
    """Polynomial hash ``[0, 2**61) -> [0, range)`` of independence degree ``k``.

    ``coefficients`` has shape ``(*batch, k)``; a batch holds independent
    functions that are evaluated together.
    """

    k: int
    coefficients: np.ndarray
    range: int

    @property
    def batch_shape(self) -> tuple:
        return self.coefficients.shape[:-1]

    def raw(self, x) -> np.ndarray:
        """61-bit hash values, shape ``(*batch, *x.shape)``."""
        xs = _u64(np.asarray(x, dtype=np.int64) % MERSENNE_61)
        coef = self.coefficients.reshape(self.batch_shape + (1,) * xs.ndim + (self.k,))
        acc = np.broadcast_to(coef[..., self.k - 1], self.batch_shape + xs.shape)
        for j in range(self.k - 2, -1, -1):
            acc = _addmod61(mulmod61(acc, xs), coef[..., j])
        return acc

    def __call__(self, x) -> np.ndarray:
        return reduce_range(self.raw(x), self.range)


def hash_new(seed: SeedLike, k: int = 4, range: int = 2) -> KWiseHash:
    """Draw a k-wise independent hash into ``[0, range)`` from ``seed``."""
    if k < 2:
        raise ValueError(f"independence degree must be >= 2, got {k}")
    if range < 1:
        raise ValueError(f"hash range must be >= 1, got {range}")
    if range >= 1 << 32:
        raise ValueError("hash range must be below 2**32")
    seeds = seed_values(seed)
    words = stream(seeds[..., None], np.arange(k, dtype=np.uint64))
    coef = (words >> np.uint64(3)) % _P
    # keep the leading coefficient nonzero so the polynomial has full degree
    coef[..., k - 1] = np.where(coef[..., k - 1] == 0, np.uint64(1), coef[..., k - 1])
    return KWiseHash(k, coef, int(range))


@dataclass(frozen=True)
class SignHash:
    """4-wise independent +-1 function."""

    inner: KWiseHash

    @classmethod
    def new(cls, seed: SeedLike) -> "SignHash":
        return cls(hash_new(seed, k=4, range=2))

    def __call__(self, i) -> np.ndarray:
        return 1.0 - 2.0 * self.inner(i).astype(np.float64)


def sign_eval(s: SignHash, i) -> np.ndarray:
    return s(i)
