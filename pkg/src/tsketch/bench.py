"""Wall-clock measurements of the recursive sketch (dense, sparse, degree sweeps)."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .hashing import SeedPath
from .recursive import RecursiveSketch, as_variant


@dataclass
class BenchRow:
    case: str
    d: int
    n: int
    p: int
    m: int
    s: int | None
    nnz: int
    phase: str
    wall_time: float

    def as_dict(self) -> dict:
        return asdict(self)


def _min_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def time_apply(sk: RecursiveSketch, X, repeats: int = 5, threads: int = 1) -> dict:
    """Best-of-``repeats`` total, leaf-phase and tree-phase times of ``apply_matrix``."""
    best = {"total": float("inf"), "leaf": float("inf"), "tree": float("inf")}
    for _ in range(repeats):
        timings: dict = {}
        t0 = time.perf_counter()
        sk.apply_matrix(X, threads=threads, timings=timings)
        total = time.perf_counter() - t0
        best["total"] = min(best["total"], total)
        best["leaf"] = min(best["leaf"], timings["leaf"])
        best["tree"] = min(best["tree"], timings["tree"])
    return best


def time_leaf_phase(sk: RecursiveSketch, X, repeats: int = 5) -> float:
    """Best-of-``repeats`` time of the leaf phase alone."""
    return _min_time(lambda: sk._leaf_columns(X), repeats)


def time_interleaved(fns, repeats: int = 5) -> list[float]:
    """Best-of-``repeats`` time of each callable, alternating between them.

    Alternating keeps slow drifts of the machine (frequency scaling, noisy
    neighbours) from landing on only one side of a ratio.
    """
    best = [float("inf")] * len(fns)
    for _ in range(repeats):
        for i, fn in enumerate(fns):
            t0 = time.perf_counter()
            fn()
            best[i] = min(best[i], time.perf_counter() - t0)
    return best


def random_sparse(d: int, n: int, density: float, seed: int = 0) -> sp.csc_matrix:
    rng = np.random.default_rng(seed)
    return sp.random(d, n, density=density, format="csc", random_state=rng, data_rvs=rng.standard_normal)


def _row(case, sk, X, phase, t) -> BenchRow:
    nnz = int(X.nnz) if sp.issparse(X) else int(np.count_nonzero(X))
    s = sk.variant.sparsity if sk.variant.name == "high-prob" else None
    return BenchRow(case, sk.d, X.shape[1], sk.p, sk.m, s, nnz, phase, t)


def run_bench(
    p: int = 2,
    m: int = 256,
    variant="const-prob",
    seed=SeedPath(),
    repeats: int = 5,
    threads: int = 1,
    dense_d: int = 64,
    dense_n: int = 1000,
    sparse_d: int = 100_000,
    sparse_n: int = 200,
    density: float = 0.01,
) -> list[BenchRow]:
    """Timing table: n doubling (dense), nnz doubling (sparse, leaf phase), p = 2 vs 4."""
    variant = as_variant(variant)
    rows: list[BenchRow] = []
    rng = np.random.default_rng(0)
    sk = RecursiveSketch(dense_d, p, m, variant, seed)
    dense = [rng.standard_normal((dense_d, n)) for n in (dense_n, 2 * dense_n)]
    times = time_interleaved([lambda X=X: sk.apply_matrix(X, threads=threads) for X in dense], repeats)
    rows += [_row("dense-n", sk, X, "total", t) for X, t in zip(dense, times)]
    sk_sparse = RecursiveSketch(sparse_d, p, m, variant, seed)
    sparse = [random_sparse(sparse_d, sparse_n, dens, seed=1) for dens in (density, 2 * density)]
    times = time_interleaved([lambda X=X: sk_sparse._leaf_columns(X) for X in sparse], repeats)
    rows += [_row("sparse-nnz", sk_sparse, X, "leaf", t) for X, t in zip(sparse, times)]
    X = rng.standard_normal((dense_d, dense_n))
    for deg in (2, 4):
        sk_deg = RecursiveSketch(dense_d, deg, m, variant, seed)
        rows.append(_row("degree", sk_deg, X, "total", time_apply(sk_deg, X, repeats, threads)["total"]))
    return rows
