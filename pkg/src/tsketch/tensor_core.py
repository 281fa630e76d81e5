"""Tensor-product primitives and the two fast transforms used by the sketches.

Index convention (used everywhere in the package): in ``u ⊗ v`` with
``u ∈ R^a`` and ``v ∈ R^b`` the entry ``u[i] * v[j]`` sits at flat index
``i + a*j``, i.e. the first factor varies fastest.  Under this convention
reshaping is Fortran-order and ``kron_matrix(A, B)`` is ``np.kron(B, A)``.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

DEFAULT_SIZE_GUARD = 2**24
_SIZE_GUARD_ENV = "TSKIT_SIZE_GUARD"
_size_guard_override: int | None = None


class SizeGuardError(ValueError):
    """Raised when an operation would materialize more elements than allowed."""


def size_guard() -> int:
    """Current materialization limit (number of float64 elements)."""
    if _size_guard_override is not None:
        return _size_guard_override
    env = os.environ.get(_SIZE_GUARD_ENV)
    if env:
        return int(env)
    return DEFAULT_SIZE_GUARD


@contextlib.contextmanager
def guard_limit(limit: int) -> Iterator[None]:
    """Temporarily replace the materialization limit."""
    global _size_guard_override
    previous = _size_guard_override
    _size_guard_override = int(limit)
    try:
        yield
    finally:
        _size_guard_override = previous


def check_size(n_elements: int, what: str = "result") -> None:
    limit = size_guard()
    if n_elements > limit:
        raise SizeGuardError(
            f"{what} would hold {n_elements} elements, above the size guard of {limit} "
            f"(raise it with {_SIZE_GUARD_ENV} or guard_limit())"
        )


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise ValueError(f"expected a positive integer, got {n}")
    return 1 << (int(n) - 1).bit_length()


def as_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(a, name: str = "A") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SparseVector:
    """Sparse vector stored as strictly increasing indices and nonzero values."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"indices must lie in [0, {self.dim})")
        if np.any(val == 0.0):
            raise ValueError("stored values must be nonzero")
        if not np.all(np.isfinite(val)):
            raise ValueError("values contain NaN or Inf")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = as_vector(x)
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def tensor_product(u, v) -> np.ndarray:
    """Flattened ``u ⊗ v``; entry ``i + len(u)*j`` equals ``u[i]*v[j]``."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.size == 0 or v.size == 0:
        raise ValueError("tensor factors must be non-empty")
    n = u.size * v.size
    if n > np.iinfo(np.int64).max:
        raise OverflowError(f"tensor product dimension {u.size}*{v.size} overflows")
    return np.multiply.outer(v, u).ravel()


def self_tensor(x, p: int) -> np.ndarray:
    """``x^{⊗p}`` materialized; refused above the size guard."""
    x = as_vector(x)
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    check_size(x.size**p, f"self_tensor(d={x.size}, p={p})")
    out = x
    for _ in range(p - 1):
        out = np.multiply.outer(x, out).ravel()
    return out


def reshape(v, m: int, n: int) -> np.ndarray:
    """The ``(m, n)``-reshaping: ``R[i, j] = v[i + m*j]``."""
    v = as_vector(v, "v")
    if v.size != m * n:
        raise ValueError(f"cannot reshape length {v.size} into {m}x{n}")
    return v.reshape((m, n), order="F")


def flatten(a) -> np.ndarray:
    """Inverse of :func:`reshape` (column-major flattening)."""
    return np.asarray(a, dtype=np.float64).ravel(order="F")


def kron_matrix(*mats) -> np.ndarray:
    """Matrix tensor product ``A_1 × A_2 × ... × A_k``.

    Satisfies ``(A × B)(u ⊗ v) = (Au) ⊗ (Bv)`` under the package index order.
    """
    if not mats:
        raise ValueError("need at least one matrix")
    mats = [as_matrix(a) for a in mats]
    rows = int(np.prod([a.shape[0] for a in mats], dtype=object))
    cols = int(np.prod([a.shape[1] for a in mats], dtype=object))
    check_size(rows * cols, "kron_matrix result")
    out = mats[0]
    for a in mats[1:]:
        out = np.kron(a, out)
    return out


def _check_pow2_length(n: int, what: str) -> None:
    if not is_power_of_two(n):
        raise ValueError(f"{what} length must be a power of two, got {n}")


_BITREV_CACHE: dict[int, np.ndarray] = {}
_TWIDDLE_CACHE: dict[tuple[int, bool], list[np.ndarray]] = {}


def _bit_reversal(n: int) -> np.ndarray:
    perm = _BITREV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.int64)
        for b in range(bits):
            perm |= ((idx >> b) & 1) << (bits - 1 - b)
        _BITREV_CACHE[n] = perm
    return perm


def _twiddles(n: int, inverse: bool) -> list[np.ndarray]:
    key = (n, inverse)
    tw = _TWIDDLE_CACHE.get(key)
    if tw is None:
        sign = 1.0 if inverse else -1.0
        tw = []
        size = 2
        while size <= n:
            k = np.arange(size // 2)
            tw.append(np.exp(sign * 2j * np.pi * k / size))
            size *= 2
        _TWIDDLE_CACHE[key] = tw
    return tw


def fft(buf, inverse: bool = False) -> np.ndarray:
    """Unitary radix-2 DFT along the last axis.

    Iterative decimation-in-time with a bit-reversal permutation; both
    directions carry the ``1/sqrt(L)`` factor, so the transform is
    norm-preserving and ``fft(fft(v), inverse=True) == v``.
    """
    a = np.asarray(buf, dtype=np.complex128)
    n = a.shape[-1]
    _check_pow2_length(n, "FFT")
    a = a[..., _bit_reversal(n)]
    lead = a.shape[:-1]
    for stage, w in enumerate(_twiddles(n, inverse)):
        half = 1 << stage
        blocks = a.reshape(*lead, n // (2 * half), 2, half)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * w
        a = np.stack((even + odd, even - odd), axis=-2).reshape(*lead, n)
    return a / np.sqrt(n)


def cyclic_convolve(a, b) -> np.ndarray:
    """Real cyclic convolution of equal power-of-two length along the last axis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[-1]
    if b.shape[-1] != n:
        raise ValueError("convolution operands must share their last dimension")
    spec = fft(a) * fft(b)
    # unitary convention: conv = sqrt(L) * ifft(fft(a) * fft(b))
    return np.sqrt(n) * fft(spec, inverse=True).real


def fwht(v, normalize: bool = False) -> np.ndarray:
    """Walsh-Hadamard transform (Sylvester order) along the last axis.

    Without normalization this is ``H @ v`` with ``H`` the +-1 Hadamard
    matrix; with it, ``H / sqrt(L)``, which is orthonormal and self-inverse.
    """
    a = np.array(v, dtype=np.float64)
    n = a.shape[-1]
    _check_pow2_length(n, "FWHT")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        blocks = a.reshape(*lead, n // (2 * h), 2, h)
        x = blocks[..., 0, :]
        y = blocks[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2).reshape(*lead, n)
        h *= 2
    if normalize:
        a /= np.sqrt(n)
    return a


def hadamard_matrix(n: int) -> np.ndarray:
    """Explicit Sylvester Hadamard matrix (oracle use)."""
    _check_pow2_length(n, "Hadamard")
    check_size(n * n, "Hadamard matrix")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h
