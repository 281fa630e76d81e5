"""Recursive binary-tree sketch for p-fold self-tensored inputs.

A degree-``p`` sketch pads the degree up to ``q = 2**ceil(log2 p)``.  ``q``
independent leaf sketches map ``R^d -> R^m``; internal nodes are degree-two
tensor sketches ``R^{m*m} -> R^m`` arranged as a balanced binary tree
(``q - 1`` of them).  Leaves ``p..q-1`` see the first standard basis vector
instead of ``x``, which realizes ``x^{⊗p} ⊗ e1^{⊗(q-p)}``.

``RecursiveSketch.apply_point`` never forms a vector longer than ``m``
per tree slot; the explicit matrix of the same linear map is available for
small instances as an independent oracle.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .base_sketches import BaseSketch, CountSketch, Osnap, TensorSketch2, TensorSrht
from .hashing import SeedLike, SeedPath, derive_values, seed_values
from .tensor_core import SparseVector, check_size, kron_matrix, next_power_of_two


@dataclass(frozen=True)
class SketchVariant:
    """Choice of base sketches.

    ``const-prob``: CountSketch leaves, TensorSketch internal nodes.
    ``high-prob``: OSNAP leaves of sparsity ``sparsity``, TensorSRHT internal nodes.
    """

    name: str = "const-prob"
    sparsity: int = 1
    bernoulli_osnap: bool = False

    def __post_init__(self):
        if self.name not in ("const-prob", "high-prob"):
            raise ValueError(f"unknown sketch variant {self.name!r}")
        if self.sparsity < 1:
            raise ValueError("OSNAP sparsity must be >= 1")


CONST_PROB = SketchVariant("const-prob")


def high_prob(s: int, bernoulli: bool = False) -> SketchVariant:
    return SketchVariant("high-prob", int(s), bernoulli)


def as_variant(variant) -> SketchVariant:
    if isinstance(variant, SketchVariant):
        return variant
    if variant == "const-prob":
        return CONST_PROB
    if variant == "high-prob":
        return high_prob(1)
    raise ValueError(f"unknown sketch variant {variant!r}")


@dataclass
class SketchedMatrix:
    """``m x n`` sketch output plus what is needed to regenerate it."""

    data: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


class RecursiveSketch:
    """The tree sketch ``Pi^p : R^{d^p} -> R^m``.

    Parameters
    ----------
    d, p, m : int
        Input dimension, tensor degree (``p >= 2``) and target dimension.  For
        the const-prob variant ``m`` is rounded up to a power of two.
    variant : SketchVariant or str
    seed : SeedPath, int, or uint64 array
        A uint64 array builds a batch of independent trees in one object.
    """

    def __init__(self, d: int, p: int, m: int, variant=CONST_PROB, seed: SeedLike = SeedPath()):
        variant = as_variant(variant)
        if d < 1:
            raise ValueError(f"input dimension must be >= 1, got {d}")
        if p < 2:
            raise ValueError(f"degree must be >= 2, got {p}")
        if m < 1:
            raise ValueError(f"target dimension must be >= 1, got {m}")
        if variant.name == "const-prob":
            m = next_power_of_two(m)
        elif variant.sparsity > m:
            raise ValueError(f"OSNAP sparsity {variant.sparsity} exceeds m={m}")
        self.d, self.p, self.m = int(d), int(p), int(m)
        self.q = next_power_of_two(p)
        self.variant = variant
        self.seed = seed
        seeds = seed_values(seed)
        self.batch_shape = seeds.shape
        self.leaves = [self._leaf(derive_values(seeds, "leaf", 0, j)) for j in range(self.q)]
        # levels[k] holds the l/2 nodes of S^l for l = q / 2**k
        self.levels = []
        width = self.q
        while width >= 2:
            self.levels.append(
                [self._internal(derive_values(seeds, "internal", width, j)) for j in range(width // 2)]
            )
            width //= 2

    def _leaf(self, seeds) -> BaseSketch:
        if self.variant.name == "const-prob":
            return CountSketch(self.d, self.m, seeds)
        return Osnap(self.d, self.m, self.variant.sparsity, seeds, self.variant.bernoulli_osnap)

    def _internal(self, seeds) -> BaseSketch:
        if self.variant.name == "const-prob":
            return TensorSketch2(self.m, self.m, seeds)
        return TensorSrht(self.m, self.m, seeds)

    @property
    def n_internal(self) -> int:
        return sum(len(level) for level in self.levels)

    def _e1(self) -> np.ndarray:
        e1 = np.zeros(self.d)
        e1[0] = 1.0
        return e1

    def leaf_phase(self, x) -> list[np.ndarray]:
        """Leaf outputs: ``T_j x`` for ``j < p`` and ``T_j e1`` for the padding leaves."""
        out = [self.leaves[j].apply(x) for j in range(self.p)]
        out += [self.leaves[j].apply(self._e1()) for j in range(self.p, self.q)]
        return out

    def tree_phase(self, ys: list[np.ndarray]) -> np.ndarray:
        """Combine leaf outputs pairwise up the tree."""
        for level in self.levels:
            ys = [node.apply_pair(ys[2 * j], ys[2 * j + 1]) for j, node in enumerate(level)]
        return ys[0]

    def apply_point(self, x) -> np.ndarray:
        """``Pi^p (x^{⊗p})`` for ``x`` of shape ``(..., d)`` or a SparseVector."""
        if isinstance(x, SparseVector):
            if x.dim != self.d:
                raise ValueError(f"expected input dim {self.d}, got {x.dim}")
        else:
            x = np.asarray(x, dtype=np.float64)
            if x.shape[-1] != self.d:
                raise ValueError(f"expected input dim {self.d}, got {x.shape[-1]}")
        return self.tree_phase(self.leaf_phase(x))

    apply = apply_point

    def _leaf_columns(self, X) -> list[np.ndarray]:
        """Leaf phase on the columns of ``X``; rows of the results are points."""
        n = X.shape[1]
        out = [np.ascontiguousarray(self.leaves[j].apply_columns(X).T) for j in range(self.p)]
        for j in range(self.p, self.q):
            col = self.leaves[j].apply(self._e1())
            out.append(np.broadcast_to(col, (n, self.m)).copy())
        return out

    def apply_matrix(self, X, threads: int = 1, timings: dict | None = None) -> SketchedMatrix:
        """Sketch the p-fold self-tensoring of every column of ``X`` (``d x n``).

        ``X`` may be dense or scipy-sparse.  Columns are processed in chunks,
        optionally on a thread pool; the result does not depend on ``threads``.
        """
        if self.batch_shape:
            raise ValueError("apply_matrix needs a single (unbatched) sketch")
        if not sp.issparse(X):
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2:
                raise ValueError("X must be a d x n matrix")
            if not np.all(np.isfinite(X)):
                raise ValueError("X contains NaN or Inf")
        if X.shape[0] != self.d:
            raise ValueError(f"expected {self.d} rows, got {X.shape[0]}")
        n = X.shape[1]
        if sp.issparse(X):
            X = sp.csc_matrix(X)
        bounds = _chunk_bounds(n, threads)

        def run(lo_hi):
            lo, hi = lo_hi
            t0 = time.perf_counter()
            ys = self._leaf_columns(X[:, lo:hi])
            t1 = time.perf_counter()
            z = self.tree_phase(ys)
            return z, t1 - t0, time.perf_counter() - t1

        if len(bounds) == 1:
            parts = [run(bounds[0])]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, bounds))
        data = np.ascontiguousarray(np.concatenate([z for z, _, _ in parts], axis=0).T)
        if timings is not None:
            timings["leaf"] = sum(t for _, t, _ in parts)
            timings["tree"] = sum(t for _, _, t in parts)
        return SketchedMatrix(data, self.provenance())

    def provenance(self) -> dict:
        seed = self.seed
        if isinstance(seed, SeedPath):
            seed_repr = {"master": seed.master, "path": [list(step) for step in seed.path]}
        elif isinstance(seed, np.uint64):
            seed_repr = {"value": int(seed)}
        elif isinstance(seed, (int, np.integer)):
            seed_repr = {"master": int(seed), "path": []}
        else:
            seed_repr = {"batch": list(np.shape(seed))}
        return {
            "seed": seed_repr,
            "variant": self.variant.name,
            "sparsity": self.variant.sparsity if self.variant.name == "high-prob" else None,
            "p": self.p,
            "d": self.d,
            "m": self.m,
        }

    def explicit_matrix(self, method: str = "kron") -> np.ndarray:
        """Dense ``m x d^p`` matrix of the sketch (small instances only).

        ``method="kron"`` forms ``Q^q T^q`` from Kronecker products of whole
        levels; ``method="factored"`` multiplies the per-node factors
        ``I × S × I`` one at a time.  Both restrict ``Pi^q`` to inputs of the
        form ``v ⊗ e1^{⊗(q-p)}``, i.e. to its first ``d^p`` columns.
        """
        if self.batch_shape:
            raise ValueError("explicit_matrix needs a single (unbatched) sketch")
        d, m, q = self.d, self.m, self.q
        check_size(m**q * d**q, "recursive sketch explicit matrix")
        if method == "kron":
            full = kron_matrix(*[leaf.explicit_matrix() for leaf in self.leaves])
            for level in self.levels:
                full = kron_matrix(*[node.explicit_matrix() for node in level]) @ full
        elif method == "factored":
            full = np.eye(d**q)
            for j in range(1, q + 1):
                leaf = self.leaves[q - j].explicit_matrix()
                factor = kron_matrix(np.eye(d ** (q - j)), leaf, np.eye(m ** (j - 1)))
                full = factor @ full
            for level in self.levels:
                width = 2 * len(level)
                for j in range(1, width // 2 + 1):
                    node = level[width // 2 - j].explicit_matrix()
                    factor = kron_matrix(np.eye(m ** (width - 2 * j)), node, np.eye(m ** (j - 1)))
                    full = factor @ full
        else:
            raise ValueError(f"unknown construction method {method!r}")
        return full[:, : d**self.p]


def _chunk_bounds(n: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, int(threads))
    if n == 0:
        return [(0, 0)]
    size = math.ceil(n / threads)
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def build(d: int, p: int, m: int, variant=CONST_PROB, master_seed: SeedLike = SeedPath()) -> RecursiveSketch:
    return RecursiveSketch(d, p, m, variant, master_seed)


def apply_point(sk: RecursiveSketch, x) -> np.ndarray:
    return sk.apply_point(x)


def apply_matrix(sk: RecursiveSketch, X, threads: int = 1) -> SketchedMatrix:
    return sk.apply_matrix(X, threads=threads)


def explicit_matrix(sk: RecursiveSketch, method: str = "kron") -> np.ndarray:
    return sk.explicit_matrix(method)


def target_dim_const_prob(p: int, s_lambda: float, eps: float, c: float = 8.0, delta: float | None = None) -> int:
    """Target dimension ``~ c p s_lambda^2 / eps^2`` for the CountSketch/TensorSketch tree.

    A heuristic instantiation of an asymptotic bound: ``c`` is a tunable
    constant.  The bound is stated for failure probability 1/10; passing
    ``delta`` scales it by ``0.1 / delta`` (the second-moment argument gives
    ``m ∝ 1/delta``).  Returns the next power of two.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if s_lambda < 1:
        raise ValueError(f"s_lambda must be >= 1, got {s_lambda}")
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    value = c * p * s_lambda**2 / eps**2
    if delta is not None:
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        value *= 0.1 / delta
    return next_power_of_two(max(1, math.ceil(value)))


def target_dim_high_prob(
    p: int,
    s_lambda: float,
    eps: float,
    n: int,
    d: int,
    delta: float,
    c1: float = 0.25,
    c2: float = 0.25,
) -> tuple[int, int]:
    """``(m, s)`` for the OSNAP/TensorSRHT tree.

    ``m = nextpow2(c1 p^4 L^3 s_lambda / eps^2)`` and
    ``s = ceil(c2 p^4 L^3 / eps^2)`` with ``L = log2(n d / (eps delta))``;
    ``s`` is clipped to ``[1, m]``.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if s_lambda < 1:
        raise ValueError(f"s_lambda must be >= 1, got {s_lambda}")
    log_term = max(1.0, math.log2(n * d / (eps * delta))) ** 3
    base = p**4 * log_term / eps**2
    m = next_power_of_two(max(1, math.ceil(c1 * base * s_lambda)))
    s = min(m, max(1, math.ceil(c2 * base)))
    return m, s
