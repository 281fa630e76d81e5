"""Base sketches: CountSketch, degree-two TensorSketch, SRHT, TensorSRHT and OSNAP.

Every sketch is an immutable bundle of precomputed tables.  The tables may
carry a leading batch shape, in which case one object holds that many
independently seeded instances; ``apply`` broadcasts the batch against the
leading axes of its input, so the same code path serves a single sketch
applied to ``n`` points and ``T`` sketches applied to one point.

Tensor sketches act on ``R^{d*d}`` with the package index order
(``u ⊗ v`` has ``u[i] v[j]`` at ``i + d*j``); ``apply_pair(u, v)`` computes
``S(u ⊗ v)`` without forming the product.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .hashing import (
    SeedLike,
    SignHash,
    derive_values,
    hash_new,
    random_signs,
    seed_values,
    stream,
    uniform_ints,
)
from .tensor_core import (
    SparseVector,
    check_size,
    cyclic_convolve,
    fwht,
    hadamard_matrix,
    next_power_of_two,
)


def _scatter(weights: np.ndarray, buckets: np.ndarray, m: int) -> np.ndarray:
    """``out[..., r] = sum_k weights[..., k] * [buckets[..., k] == r]``.

    Sums are accumulated in ``k`` order for every leading index, so results do
    not depend on how the leading axes are chunked.
    """
    weights, buckets = np.broadcast_arrays(weights, buckets)
    lead = weights.shape[:-1]
    k = weights.shape[-1]
    rows = math.prod(lead)
    flat = buckets.reshape(rows, k) + (np.arange(rows, dtype=np.int64) * m)[:, None]
    out = np.bincount(flat.ravel(), weights=weights.reshape(rows * k), minlength=rows * m)
    return out.reshape(*lead, m)


def _gather(z: np.ndarray, idx: np.ndarray) -> np.ndarray:
    lead = np.broadcast_shapes(z.shape[:-1], idx.shape[:-1])
    z = np.broadcast_to(z, lead + z.shape[-1:])
    idx = np.broadcast_to(idx, lead + idx.shape[-1:])
    return np.take_along_axis(z, idx, axis=-1)


def _pad_last(x: np.ndarray, n: int) -> np.ndarray:
    if x.shape[-1] == n:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def _csc_parts(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row indices, column indices, values) of a sparse matrix in column order."""
    X = sp.csc_matrix(X)
    X.sort_indices()
    cols = np.repeat(np.arange(X.shape[1]), np.diff(X.indptr))
    return X.indices.astype(np.int64), cols, X.data.astype(np.float64)


class BaseSketch:
    """Common surface of the base sketches.

    Subclasses set ``input_dim``, ``output_dim`` and ``batch_shape`` and
    implement ``apply``; tensor sketches also implement ``apply_pair``.
    """

    input_dim: int
    output_dim: int
    batch_shape: tuple
    is_tensor = False

    def _check_input(self, x) -> np.ndarray | SparseVector:
        if isinstance(x, SparseVector):
            if x.dim != self.input_dim:
                raise ValueError(f"expected input dim {self.input_dim}, got {x.dim}")
            return x
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains NaN or Inf")
        return x

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def apply_columns(self, X) -> np.ndarray:
        """Sketch every column of a dense or scipy-sparse ``input_dim x n`` matrix."""
        if self.batch_shape:
            raise ValueError("apply_columns needs a single (unbatched) sketch")
        if sp.issparse(X):
            return self._apply_sparse_columns(X)
        X = np.asarray(X, dtype=np.float64)
        return self.apply(np.ascontiguousarray(X.T)).T

    def _apply_sparse_columns(self, X) -> np.ndarray:
        return self.apply(np.ascontiguousarray(X.toarray().T)).T

    def explicit_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def _require_single(self):
        if self.batch_shape:
            raise ValueError("explicit_matrix needs a single (unbatched) sketch")
        check_size(self.output_dim * self.input_dim, f"{type(self).__name__} explicit matrix")


class CountSketch(BaseSketch):
    """``S[r, i] = sigma(i) * [h(i) == r]`` with 4-wise independent ``h`` and ``sigma``."""

    def __init__(self, d: int, m: int, seed: SeedLike):
        if d < 1 or m < 1:
            raise ValueError(f"invalid CountSketch dims d={d}, m={m}")
        seeds = seed_values(seed)
        self.input_dim, self.output_dim = int(d), int(m)
        self.batch_shape = seeds.shape
        self.h = hash_new(derive_values(seeds, "hash", 0, 0), k=4, range=m)
        self.sigma = SignHash.new(derive_values(seeds, "sign", 0, 0))
        idx = np.arange(d)
        self.buckets = self.h(idx)
        self.signs = self.sigma(idx)

    def apply(self, x) -> np.ndarray:
        x = self._check_input(x)
        if isinstance(x, SparseVector):
            return _scatter(
                self.signs[..., x.indices] * x.values, self.buckets[..., x.indices], self.output_dim
            )
        return _scatter(self.signs * x, self.buckets, self.output_dim)

    def _apply_sparse_columns(self, X) -> np.ndarray:
        rows, cols, vals = _csc_parts(X)
        m, n = self.output_dim, X.shape[1]
        flat = cols * m + self.buckets[rows]
        out = np.bincount(flat, weights=self.signs[rows] * vals, minlength=n * m)
        return out.reshape(n, m).T

    def explicit_matrix(self) -> np.ndarray:
        self._require_single()
        out = np.zeros((self.output_dim, self.input_dim))
        out[self.buckets, np.arange(self.input_dim)] = self.signs
        return out


class TensorSketch2(BaseSketch):
    """Degree-two TensorSketch ``R^{d*d} -> R^m``.

    Column ``(i, j)`` has the single entry ``sigma1(i) sigma2(j)`` in row
    ``(h1(i) + h2(j)) mod m``.  ``m`` is rounded up to a power of two so that
    one length-``m`` FFT realizes the mod-``m`` convolution.
    """

    is_tensor = True

    def __init__(self, d: int, m: int, seed: SeedLike):
        if d < 1 or m < 1:
            raise ValueError(f"invalid TensorSketch dims d={d}, m={m}")
        m = next_power_of_two(m)
        seeds = seed_values(seed)
        self.side_dim = int(d)
        self.input_dim, self.output_dim = int(d) * int(d), m
        self.batch_shape = seeds.shape
        self.h1 = hash_new(derive_values(seeds, "hash", 1, 0), k=4, range=m)
        self.h2 = hash_new(derive_values(seeds, "hash", 2, 0), k=4, range=m)
        self.sigma1 = SignHash.new(derive_values(seeds, "sign", 1, 0))
        self.sigma2 = SignHash.new(derive_values(seeds, "sign", 2, 0))
        idx = np.arange(d)
        self.buckets1, self.buckets2 = self.h1(idx), self.h2(idx)
        self.signs1, self.signs2 = self.sigma1(idx), self.sigma2(idx)

    def _full_tables(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.side_dim
        lead = self.batch_shape
        buckets = (self.buckets1[..., None, :] + self.buckets2[..., :, None]) % self.output_dim
        signs = self.signs1[..., None, :] * self.signs2[..., :, None]
        return buckets.reshape(*lead, d * d), signs.reshape(*lead, d * d)

    def apply_pair(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if u.shape[-1] != self.side_dim or v.shape[-1] != self.side_dim:
            raise ValueError(f"tensor factors must have dim {self.side_dim}")
        m = self.output_dim
        a = _scatter(self.signs1 * u, self.buckets1, m)
        b = _scatter(self.signs2 * v, self.buckets2, m)
        return cyclic_convolve(a, b)

    def apply(self, x) -> np.ndarray:
        x = self._check_input(x)
        buckets, signs = self._full_tables()
        if isinstance(x, SparseVector):
            return _scatter(signs[..., x.indices] * x.values, buckets[..., x.indices], self.output_dim)
        return _scatter(signs * x, buckets, self.output_dim)

    def explicit_matrix(self) -> np.ndarray:
        self._require_single()
        buckets, signs = self._full_tables()
        out = np.zeros((self.output_dim, self.input_dim))
        out[buckets, np.arange(self.input_dim)] = signs
        return out


class Srht(BaseSketch):
    """``S = (1/sqrt(m)) P H D`` with ``H`` the +-1 Hadamard matrix of the padded dim.

    Rows of ``P`` are sampled uniformly with replacement.
    """

    def __init__(self, d: int, m: int, seed: SeedLike):
        if d < 1 or m < 1:
            raise ValueError(f"invalid SRHT dims d={d}, m={m}")
        seeds = seed_values(seed)
        self.input_dim, self.output_dim = int(d), int(m)
        self.padded_dim = next_power_of_two(d)
        self.batch_shape = seeds.shape
        diag_seed = derive_values(seeds, "diag", 0, 0)[..., None]
        row_seed = derive_values(seeds, "rows", 0, 0)[..., None]
        self.diag = random_signs(stream(diag_seed, np.arange(self.padded_dim)))
        self.rows = uniform_ints(stream(row_seed, np.arange(m)), self.padded_dim)

    def apply(self, x) -> np.ndarray:
        x = self._check_input(x)
        if isinstance(x, SparseVector):
            x = x.to_dense()
        z = fwht(self.diag * _pad_last(x, self.padded_dim))
        return _gather(z, self.rows) / math.sqrt(self.output_dim)

    def explicit_matrix(self) -> np.ndarray:
        self._require_single()
        check_size(self.padded_dim**2, "Hadamard matrix")
        hd = hadamard_matrix(self.padded_dim) * self.diag
        return hd[self.rows, : self.input_dim] / math.sqrt(self.output_dim)


class TensorSrht(BaseSketch):
    """``S = (1/sqrt(m)) P (H D1 × H D2)`` acting on ``R^{d*d}``.

    Output row ``r`` is ``(H D1 u)[i_r] * (H D2 v)[j_r] / sqrt(m)`` for
    ``(i_r, j_r)`` uniform over the padded grid.
    """

    is_tensor = True

    def __init__(self, d: int, m: int, seed: SeedLike):
        if d < 1 or m < 1:
            raise ValueError(f"invalid TensorSRHT dims d={d}, m={m}")
        seeds = seed_values(seed)
        self.side_dim = int(d)
        self.input_dim, self.output_dim = int(d) * int(d), int(m)
        self.padded_dim = next_power_of_two(d)
        self.batch_shape = seeds.shape
        n = self.padded_dim
        self.diag1 = random_signs(stream(derive_values(seeds, "diag", 1, 0)[..., None], np.arange(n)))
        self.diag2 = random_signs(stream(derive_values(seeds, "diag", 2, 0)[..., None], np.arange(n)))
        self.rows1 = uniform_ints(stream(derive_values(seeds, "rows", 1, 0)[..., None], np.arange(m)), n)
        self.rows2 = uniform_ints(stream(derive_values(seeds, "rows", 2, 0)[..., None], np.arange(m)), n)

    def apply_pair(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if u.shape[-1] != self.side_dim or v.shape[-1] != self.side_dim:
            raise ValueError(f"tensor factors must have dim {self.side_dim}")
        a = fwht(self.diag1 * _pad_last(u, self.padded_dim))
        b = fwht(self.diag2 * _pad_last(v, self.padded_dim))
        return _gather(a, self.rows1) * _gather(b, self.rows2) / math.sqrt(self.output_dim)

    def apply(self, x) -> np.ndarray:
        x = self._check_input(x)
        if isinstance(x, SparseVector):
            x = x.to_dense()
        d, n = self.side_dim, self.padded_dim
        # grid[..., i, j] = x[i + d*j]; then H D1 (grid) (H D2)^T
        grid = np.swapaxes(x.reshape(*x.shape[:-1], d, d), -1, -2)
        grid = np.pad(grid, [(0, 0)] * (grid.ndim - 2) + [(0, n - d), (0, n - d)])
        grid = grid * self.diag1[..., :, None] * self.diag2[..., None, :]
        grid = fwht(np.swapaxes(fwht(grid), -1, -2))  # [..., j, i]
        flat = (self.rows2 * n + self.rows1)
        lead = np.broadcast_shapes(grid.shape[:-2], flat.shape[:-1])
        grid = np.broadcast_to(grid, lead + (n, n)).reshape(*lead, n * n)
        return _gather(grid, flat) / math.sqrt(self.output_dim)

    def explicit_matrix(self) -> np.ndarray:
        self._require_single()
        h = hadamard_matrix(self.padded_dim)
        d = self.side_dim
        e = (h * self.diag1)[self.rows1, :d]
        f = (h * self.diag2)[self.rows2, :d]
        m = self.output_dim
        return (f[:, :, None] * e[:, None, :]).reshape(m, d * d) / math.sqrt(m)


class Osnap(BaseSketch):
    """Sparse embedding with ``+-1/sqrt(s)`` entries.

    By default every column has exactly ``s`` nonzeros in distinct rows,
    chosen by a partial Fisher-Yates shuffle of ``[m]``.  With
    ``bernoulli=True`` each entry is instead nonzero independently with
    probability ``s/m``, so column counts vary.
    """

    def __init__(self, d: int, m: int, s: int, seed: SeedLike, bernoulli: bool = False):
        if d < 1 or m < 1:
            raise ValueError(f"invalid OSNAP dims d={d}, m={m}")
        if not 1 <= s <= m:
            raise ValueError(f"OSNAP sparsity must satisfy 1 <= s <= m, got s={s}, m={m}")
        seeds = seed_values(seed)
        self.input_dim, self.output_dim, self.sparsity = int(d), int(m), int(s)
        self.bernoulli = bool(bernoulli)
        self.batch_shape = seeds.shape
        lead = seeds.shape
        sign_seed = derive_values(seeds, "sign", 0, 0)[..., None, None]
        scale = 1.0 / math.sqrt(s)
        if bernoulli:
            mask_seed = derive_values(seeds, "mask", 0, 0)[..., None, None]
            counter = np.arange(d)[:, None] * m + np.arange(m)[None, :]
            keep = uniform_ints(stream(mask_seed, counter), m) < s
            self.rows = np.broadcast_to(np.arange(m), lead + (d, m)).copy()
            self.values = np.where(keep, random_signs(stream(sign_seed, counter)) * scale, 0.0)
        else:
            fy_seed = derive_values(seeds, "shuffle", 0, 0)[..., None]
            perm = np.broadcast_to(np.arange(m), lead + (d, m)).copy()
            cols = np.arange(d)
            for k in range(s):
                j = k + uniform_ints(stream(fy_seed, cols * s + k), m - k)
                pk = perm[..., k].copy()
                pj = np.take_along_axis(perm, j[..., None], axis=-1)[..., 0]
                perm[..., k] = pj
                np.put_along_axis(perm, j[..., None], pk[..., None], axis=-1)
            self.rows = np.ascontiguousarray(perm[..., :s])
            counter = cols[:, None] * s + np.arange(s)[None, :]
            self.values = random_signs(stream(sign_seed, counter)) * scale

    def apply(self, x) -> np.ndarray:
        x = self._check_input(x)
        m = self.output_dim
        if isinstance(x, SparseVector):
            rows = self.rows[..., x.indices, :]
            w = self.values[..., x.indices, :] * x.values[:, None]
        else:
            rows = self.rows
            w = self.values * x[..., :, None]
        w, rows = np.broadcast_arrays(w, rows)
        lead = w.shape[:-2]
        return _scatter(w.reshape(*lead, -1), rows.reshape(*lead, -1), m)

    def _apply_sparse_columns(self, X) -> np.ndarray:
        rows, cols, vals = _csc_parts(X)
        m, n = self.output_dim, X.shape[1]
        flat = cols[:, None] * m + self.rows[rows]
        w = self.values[rows] * vals[:, None]
        out = np.bincount(flat.ravel(), weights=w.ravel(), minlength=n * m)
        return out.reshape(n, m).T

    def explicit_matrix(self) -> np.ndarray:
        self._require_single()
        out = np.zeros((self.output_dim, self.input_dim))
        cols = np.broadcast_to(np.arange(self.input_dim)[:, None], self.rows.shape)
        np.add.at(out, (self.rows, cols), self.values)
        return out


def countsketch_apply(cs: CountSketch, x) -> np.ndarray:
    return cs.apply(x)


def tensorsketch2_apply(ts: TensorSketch2, u, v) -> np.ndarray:
    return ts.apply_pair(u, v)


def srht_apply(sr: Srht, x) -> np.ndarray:
    return sr.apply(x)


def tensorsrht_apply(tsr: TensorSrht, u, v) -> np.ndarray:
    return tsr.apply_pair(u, v)


def osnap_apply(os_: Osnap, x) -> np.ndarray:
    return os_.apply(x)


def explicit_matrix(sketch: BaseSketch) -> np.ndarray:
    return sketch.explicit_matrix()
