"""Polynomial and Gaussian kernels on top of the recursive sketch.

Exact Gram matrices and statistical dimensions, the truncated-Taylor
Gaussian feature map, sketch-and-solve kernel ridge regression, and the two
embedding-quality measures (subspace-embedding error and approximate matrix
product error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .base_sketches import CountSketch, Osnap
from .hashing import SeedLike, SeedPath, derive_values
from .oracle import clamp_psd_eigenvalues, operator_norm, psd_sqrt_inv, symmetric_eig
from .recursive import (
    CONST_PROB,
    RecursiveSketch,
    SketchedMatrix,
    as_variant,
    high_prob,
    target_dim_const_prob,
    target_dim_high_prob,
)
from .tensor_core import as_matrix, as_vector

Q_MAX = 64


class RadiusError(ValueError):
    """A column violates the squared-radius bound of a Gaussian feature map."""

    def __init__(self, column: int, sq_norm: float, r: float):
        super().__init__(f"column {column} has squared norm {sq_norm:.6g} > r = {r:.6g}")
        self.column = column


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelJob:
    """Accuracy targets for a kernel sketch: ridge ``lam``, ``eps``, ``delta`` and
    the squared-radius bound ``r`` (every column has ``||x||^2 <= r``)."""

    lam: float
    eps: float
    delta: float = 0.1
    r: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.r >= 0:
            raise ValueError(f"r must be nonnegative, got {self.r}")


def _symmetrize(K: np.ndarray) -> np.ndarray:
    return (K + K.T) / 2.0


def gram_polynomial(X, p: int) -> np.ndarray:
    """Gram matrix of the degree-``p`` polynomial kernel, ``(x_i^T x_j)^p``."""
    X = as_matrix(X, "X")
    if p < 0:
        raise ValueError(f"degree must be >= 0, got {p}")
    return _symmetrize((X.T @ X) ** p)


def gram_gaussian(X) -> np.ndarray:
    """Gaussian kernel Gram matrix ``exp(-||x_j - x_k||^2 / 2)``."""
    X = as_matrix(X, "X")
    sq = np.sum(X * X, axis=0)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X.T @ X), 0.0)
    G = _symmetrize(np.exp(-dist2 / 2.0))
    np.fill_diagonal(G, 1.0)
    return G


def statistical_dimension(eigenvalues, lam: float) -> float:
    """``sum_i w_i / (w_i + lam)`` over the (clamped) eigenvalues of a PSD matrix."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    w = clamp_psd_eigenvalues(np.asarray(eigenvalues, dtype=np.float64))
    return float(np.sum(w / (w + lam)))


def statistical_dimension_of(K, lam: float) -> float:
    """Statistical dimension of a PSD matrix, eigenvalues from the Jacobi solver."""
    w, _ = symmetric_eig(K)
    return statistical_dimension(w, lam)


def taylor_tail(q: int, r: float, n: int) -> float:
    """``sum_{l > q} n rho^l / l!`` bounding the Gaussian Taylor remainder.

    With ``||x||^2 <= r`` every entry of the degree-``l`` Gram term is at most
    ``r^l``.  The base is ``rho = max(r, r^2)``, which is the textbook
    ``r^{2l}`` for ``r >= 1`` and stays a valid bound when ``r < 1``.
    Terms are built in the log domain and summed smallest-first.
    """
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if r < 0 or n < 0:
        raise ValueError("r and n must be nonnegative")
    rho = max(r, r * r)
    if rho == 0.0 or n == 0:
        return 0.0
    log_rho = math.log(rho)
    log_n = math.log(n)
    # terms grow while l < rho, so the largest one sits at l = max(q + 1, floor(rho))
    peak = max(q + 1, int(rho))
    if log_n + peak * log_rho - math.lgamma(peak + 1) > 700:
        return math.inf
    logs = []
    l = q + 1
    while True:
        lt = log_n + l * log_rho - math.lgamma(l + 1)
        logs.append(lt)
        # past the peak (l > rho) terms shrink geometrically; stop once negligible
        if l > rho and lt < max(logs) - 40.0:
            break
        l += 1
    top = max(logs)
    total = math.fsum(sorted(math.exp(v - top) for v in logs))
    if top > 700:
        return math.inf
    return math.exp(top) * total


def gaussian_degree(r: float, n: int, eps: float, lam: float, q_max: int = Q_MAX) -> int:
    """Smallest ``q`` with ``taylor_tail(q, r, n) <= eps * lam / 2``."""
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if not (eps > 0 and lam > 0):
        raise ValueError("eps and lambda must be positive")
    bound = eps * lam / 2.0
    for q in range(q_max + 1):
        if taylor_tail(q, r, n) <= bound:
            return q
    raise ValueError(f"Taylor tail exceeds {bound:.3g} at every degree up to q_max={q_max}")


class GaussianFeatureMap:
    """Truncated-Taylor sketch of the Gaussian kernel.

    Block ``l`` of a column is ``Pi^l(x^{⊗l}) / sqrt(l!)``; block 0 is the
    constant 1, block 1 is a single leaf sketch, and blocks ``l >= 2`` are
    recursive sketches.  The whole column is scaled by ``exp(-||x||^2/2)``.
    """

    def __init__(
        self,
        d: int,
        job: KernelJob,
        n: int,
        s_lambda: float,
        variant=CONST_PROB,
        seed: SeedLike = SeedPath(),
        c: float = 8.0,
        c1: float = 0.25,
        c2: float = 0.25,
        dims: list[int] | None = None,
    ):
        self.d = int(d)
        self.job = job
        self.n = int(n)
        self.variant = as_variant(variant)
        self.seed = seed
        self.q_taylor = gaussian_degree(job.r, n, job.eps, job.lam)
        self.tail = taylor_tail(self.q_taylor, job.r, n)
        q = self.q_taylor
        eps_l, delta_l = job.eps / 9.0, job.delta / (q + 1)
        s_eff = max(1.0, float(s_lambda))
        self.sketches: list = [None]
        self.dims = [1]
        self.sparsities: list[int | None] = [None]
        for l in range(1, q + 1):
            if self.variant.name == "const-prob":
                m_l = target_dim_const_prob(l, s_eff, eps_l, c, delta_l)
                s_l = None
            else:
                m_l, s_l = target_dim_high_prob(l, s_eff, eps_l, n, d, delta_l, c1, c2)
            if dims is not None:
                m_l = int(dims[l])
                if s_l is not None:
                    s_l = min(s_l, m_l)
            sub_seed = _derive(seed, "degree", l)
            if l == 1:
                if s_l is None:
                    sk = CountSketch(d, m_l, sub_seed)
                else:
                    sk = Osnap(d, m_l, s_l, sub_seed, self.variant.bernoulli_osnap)
            else:
                v = CONST_PROB if s_l is None else high_prob(s_l, self.variant.bernoulli_osnap)
                sk = RecursiveSketch(d, l, m_l, v, sub_seed)
                m_l = sk.m
            self.sketches.append(sk)
            self.dims.append(int(m_l))
            self.sparsities.append(s_l)

    @property
    def m(self) -> int:
        return int(sum(self.dims))

    def check_radius(self, X) -> None:
        sq = _column_sq_norms(X)
        slack = 1e-12 * max(1.0, self.job.r)
        bad = np.flatnonzero(sq > self.job.r + slack)
        if bad.size:
            i = int(bad[0])
            raise RadiusError(i, float(sq[i]), self.job.r)

    def apply(self, X, threads: int = 1) -> SketchedMatrix:
        """``S_g(X)`` for a ``d x n`` matrix (dense or scipy-sparse)."""
        if sp.issparse(X):
            X = sp.csc_matrix(X, dtype=np.float64)
        else:
            X = as_matrix(X, "X")
        if X.shape[0] != self.d:
            raise ValueError(f"expected {self.d} rows, got {X.shape[0]}")
        self.check_radius(X)
        n = X.shape[1]
        blocks = [np.ones((1, n))]
        for l in range(1, self.q_taylor + 1):
            sk = self.sketches[l]
            if l == 1:
                block = sk.apply_columns(X)
            else:
                block = sk.apply_matrix(X, threads=threads).data
            blocks.append(block / math.sqrt(math.factorial(l)))
        scale = np.exp(-_column_sq_norms(X) / 2.0)
        data = np.ascontiguousarray(np.concatenate(blocks, axis=0) * scale[None, :])
        return SketchedMatrix(data, self.provenance())

    def apply_point(self, x) -> np.ndarray:
        """``S_g(x)`` for one vector; shape ``(*batch, m)`` when built from a seed array."""
        x = as_vector(x, "x")
        if x.size != self.d:
            raise ValueError(f"expected length {self.d}, got {x.size}")
        self.check_radius(x[:, None])
        blocks = []
        for l in range(1, self.q_taylor + 1):
            sk = self.sketches[l]
            block = sk.apply(x) if l == 1 else sk.apply_point(x)
            blocks.append(block / math.sqrt(math.factorial(l)))
        lead = blocks[0].shape[:-1] if blocks else ()
        out = np.concatenate([np.ones(lead + (1,))] + blocks, axis=-1)
        return out * math.exp(-float(x @ x) / 2.0)

    def truncated_gram(self, X) -> np.ndarray:
        """Exact ``D P D`` with ``P = sum_{l <= q} (X^T X)^l / l!`` (what the map approximates)."""
        X = as_matrix(X, "X")
        inner = X.T @ X
        P = sum(inner**l / math.factorial(l) for l in range(self.q_taylor + 1))
        dvec = np.exp(-np.sum(X * X, axis=0) / 2.0)
        return _symmetrize(dvec[:, None] * P * dvec[None, :])

    def explicit_blocks(self) -> list[np.ndarray]:
        """Dense ``m_l x d^l`` matrix of every degree block (small instances only)."""
        out = [np.ones((1, 1))]
        for l in range(1, self.q_taylor + 1):
            out.append(self.sketches[l].explicit_matrix())
        return out

    def provenance(self) -> dict:
        return {
            "q_taylor": self.q_taylor,
            "taylor_tail": self.tail,
            "dims": list(self.dims),
            "sparsities": list(self.sparsities),
            "m": self.m,
            "variant": self.variant.name,
            "r": self.job.r,
        }


def _derive(seed: SeedLike, role: str, index: int):
    if isinstance(seed, SeedPath):
        return seed.derive(role, 0, index)
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, np.uint64):
        return SeedPath(int(seed)).derive(role, 0, index)
    return derive_values(seed, role, 0, index)


def _column_sq_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=0)).ravel()
    return np.sum(X * X, axis=0)


def gaussian_feature_map_build(
    d: int, job: KernelJob, n: int, s_lambda: float, variant=CONST_PROB, seed: SeedLike = SeedPath(), **kw
) -> GaussianFeatureMap:
    return GaussianFeatureMap(d, job, n, s_lambda, variant, seed, **kw)


def gaussian_feature_map_apply(gfm: GaussianFeatureMap, X, threads: int = 1) -> SketchedMatrix:
    return gfm.apply(X, threads)


def ose_spectral_error(sketched, K, lam: float) -> float:
    """``||(K + lam I)^{-1/2} (S^T S - K) (K + lam I)^{-1/2}||_op`` for an ``m x n`` sketch ``S``."""
    S = np.asarray(getattr(sketched, "data", sketched), dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if S.ndim != 2 or K.shape != (S.shape[1], S.shape[1]):
        raise ValueError(f"sketch {S.shape} and Gram {K.shape} are not conformable")
    W = psd_sqrt_inv(K, lam)
    E = W @ (S.T @ S - K) @ W
    return operator_norm(_symmetrize(E))


def amp_error(C, D, apply: Callable[[np.ndarray], np.ndarray]) -> float:
    """Relative approximate-matrix-product error ``||C^T P^T P D - C^T D||_F / (||C||_F ||D||_F)``.

    ``apply`` maps a ``d' x n`` matrix to its ``m x n`` sketch.
    """
    C = as_matrix(C, "C")
    D = as_matrix(D, "D")
    if C.shape[0] != D.shape[0]:
        raise ValueError("C and D must have the same number of rows")
    denom = np.linalg.norm(C) * np.linalg.norm(D)
    if denom == 0.0:
        return 0.0
    SC = np.asarray(apply(C))
    SD = np.asarray(apply(D))
    return float(np.linalg.norm(SC.T @ SD - C.T @ D) / denom)


@dataclass
class RidgeResult:
    coef: np.ndarray
    objective_sketched: float
    objective_optimal: float
    m: int
    provenance: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.objective_optimal == 0.0:
            return 1.0 if self.objective_sketched == 0.0 else math.inf
        return self.objective_sketched / self.objective_optimal


def ridge_objective(K, kb, bb: float, y, lam: float) -> float:
    """``||A y - phi(b)||^2 + lam ||y||^2`` through inner products only.

    ``K = A^T A``, ``kb = A^T phi(b)`` and ``bb = ||phi(b)||^2``.
    """
    y = np.asarray(y, dtype=np.float64)
    return float(y @ K @ y - 2.0 * (y @ kb) + bb + lam * (y @ y))


def _spd_solve(M, rhs) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"normal equations are not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def exact_ridge(X, b, p: int, lam: float) -> tuple[np.ndarray, float]:
    """Optimal coefficients and objective via the kernel trick (no sketch)."""
    X = as_matrix(X, "X")
    b = as_vector(b, "b")
    K = gram_polynomial(X, p)
    kb = (X.T @ b) ** p
    bb = float(b @ b) ** p
    y = _spd_solve(K + lam * np.eye(K.shape[0]), kb)
    return y, ridge_objective(K, kb, bb, y, lam)


def sketch_ridge_regression(
    X,
    b,
    p: int,
    lam: float,
    m: int | str = "auto",
    variant=CONST_PROB,
    seed: SeedLike = SeedPath(),
    eps: float = 0.5,
    delta: float = 0.1,
    c: float = 8.0,
    c1: float = 0.25,
    c2: float = 0.25,
    threads: int = 1,
) -> RidgeResult:
    """Sketch-and-solve ridge regression for the degree-``p`` polynomial kernel.

    Columns ``x_i^{⊗p}`` and ``b^{⊗p}`` go through one recursive sketch; the
    ``n``-dimensional regularized normal equations are solved by Cholesky.
    The returned objectives are exact (kernel trick).
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    X = as_matrix(X, "X")
    b = as_vector(b, "b")
    d, n = X.shape
    if b.size != d:
        raise ValueError(f"b has length {b.size}, expected {d}")
    K = gram_polynomial(X, p)
    variant = as_variant(variant)
    if m == "auto":
        s_lam = max(1.0, statistical_dimension_of(K, lam))
        if variant.name == "const-prob":
            m = target_dim_const_prob(p, s_lam, eps, c)
        else:
            m, s = target_dim_high_prob(p, s_lam, eps, n, d, delta, c1, c2)
            variant = high_prob(s, variant.bernoulli_osnap)
    sk = RecursiveSketch(d, p, int(m), variant, seed)
    SA = sk.apply_matrix(X, threads=threads).data
    Sb = sk.apply_point(b)
    y = _spd_solve(SA.T @ SA + lam * np.eye(n), SA.T @ Sb)
    kb = (X.T @ b) ** p
    bb = float(b @ b) ** p
    _, opt = exact_ridge(X, b, p, lam)
    return RidgeResult(y, ridge_objective(K, kb, bb, y, lam), opt, sk.m, sk.provenance())


__all__ = [
    "GaussianFeatureMap",
    "KernelJob",
    "Q_MAX",
    "RadiusError",
    "RidgeResult",
    "SolverError",
    "amp_error",
    "exact_ridge",
    "gaussian_degree",
    "gaussian_feature_map_apply",
    "gaussian_feature_map_build",
    "gram_gaussian",
    "gram_polynomial",
    "ose_spectral_error",
    "ridge_objective",
    "sketch_ridge_regression",
    "statistical_dimension",
    "statistical_dimension_of",
    "taylor_tail",
]
