"""Independent checks: a Jacobi eigensolver, Monte-Carlo moment estimation,
the spectral-property test, and the degree-q TensorSketch variance probe.

Nothing here calls LAPACK eigen-routines, so results can be compared against
numpy/scipy without sharing code paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .base_sketches import CountSketch, _scatter
from .hashing import SeedLike, SeedPath, derive_values, trial_seeds
from .recursive import CONST_PROB, RecursiveSketch
from .tensor_core import fft


class ConvergenceError(RuntimeError):
    pass


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairs covering all ``n(n-1)/2`` pairs in ``n-1`` rounds (circle method)."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def symmetric_eig(M, tol: float = 1e-12, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once; pairs within a round are
    disjoint, so their rotations are applied together.  Iterates until the
    off-diagonal Frobenius norm drops below ``tol * ||M||_F``.

    Returns
    -------
    eigenvalues : ndarray
        Sorted in descending order.
    eigenvectors : ndarray
        Orthonormal columns matching ``eigenvalues``.
    """
    A = np.array(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if scale and np.linalg.norm(A - A.T) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    A = (A + A.T) / 2.0
    V = np.eye(n)
    rounds = _round_robin(n)
    for _ in range(max_sweeps + 1):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            app, aqq = A[P, P], A[Q, Q]
            safe = np.where(active, apq, 1.0)
            tau = (aqq - app) / (2.0 * safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(active, t * c, 0.0)
            colp, colq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * colp - s * colq
            A[:, Q] = s * colp + c * colq
            rowp, rowq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rowp - s[:, None] * rowq
            A[Q, :] = s[:, None] * rowp + c[:, None] * rowq
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def operator_norm(M) -> float:
    """Largest singular value (largest |eigenvalue| when ``M`` is symmetric)."""
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    if M.ndim == 2 and M.shape[0] == M.shape[1]:
        scale = np.linalg.norm(M)
        if np.linalg.norm(M - M.T) <= 1e-12 * scale:
            w, _ = symmetric_eig(M)
            return float(np.max(np.abs(w)))
    gram = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    w, _ = symmetric_eig(gram)
    return math.sqrt(max(0.0, float(w[0])))


def clamp_psd_eigenvalues(w: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Zero out round-off negative eigenvalues; reject genuinely indefinite input."""
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w.min() < -rel_tol * top:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return np.maximum(w, 0.0)


def psd_sqrt_inv(K, lam: float) -> np.ndarray:
    """``(K + lam I)^{-1/2}`` for symmetric PSD ``K`` and ``lam > 0``."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    w, V = symmetric_eig(K)
    w = clamp_psd_eigenvalues(w)
    out = (V / np.sqrt(w + lam)) @ V.T
    return (out + out.T) / 2.0


@dataclass
class MomentEstimate:
    """Mean and variance of a Monte-Carlo sample."""

    trials: int
    mean: float
    variance: float
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def std_err(self) -> float:
        return math.sqrt(self.variance / self.trials) if self.trials else float("nan")

    def within(self, target: float, n_std_err: float = 4.0) -> bool:
        return abs(self.mean - target) <= n_std_err * self.std_err


class _Accumulator:
    """Streaming mean/variance with Chan's pairwise merge of chunk statistics."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray) -> None:
        k = values.size
        if k == 0:
            return
        mean_b = float(np.mean(values))
        m2_b = float(np.sum((values - mean_b) ** 2))
        total = self.n + k
        delta = mean_b - self.mean
        self.mean += delta * k / total
        self.m2 += m2_b + delta * delta * self.n * k / total
        self.n = total

    def result(self, samples=None) -> MomentEstimate:
        var = self.m2 / (self.n - 1) if self.n > 1 else 0.0
        return MomentEstimate(self.n, self.mean, var, samples)


def monte_carlo(
    sample: Callable[[np.ndarray], np.ndarray],
    trials: int,
    seed: SeedLike = SeedPath(),
    chunk: int = 10_000,
    keep_samples: bool = False,
) -> MomentEstimate:
    """Run ``sample(seed_values) -> per-trial values`` over ``trials`` seeded trials in chunks."""
    acc = _Accumulator()
    kept = []
    for start in range(0, trials, chunk):
        seeds = trial_seeds(seed, min(chunk, trials - start), start)
        values = np.asarray(sample(seeds), dtype=np.float64).reshape(-1)
        acc.add(values)
        if keep_samples:
            kept.append(values)
    return acc.result(np.concatenate(kept) if keep_samples else None)


def estimate_moments(
    sketch_factory: Callable,
    x,
    y,
    trials: int,
    seed: SeedLike = SeedPath(),
    chunk: int = 10_000,
    keep_samples: bool = False,
) -> MomentEstimate:
    """Empirical distribution of ``(Sx)^T (Sy)`` over fresh sketches.

    ``sketch_factory(seeds)`` receives a uint64 array of per-trial seeds and
    returns a (batched) sketch whose ``apply`` broadcasts over that batch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def sample(seeds):
        sk = sketch_factory(seeds)
        sx = np.broadcast_to(sk.apply(x), seeds.shape + (sk_dim(sk, x),))
        sy = np.broadcast_to(sk.apply(y), sx.shape)
        return np.sum(sx * sy, axis=-1)

    return monte_carlo(sample, trials, seed, chunk, keep_samples)


def sk_dim(sk, x) -> int:
    return getattr(sk, "output_dim", None) or getattr(sk, "m", None) or np.shape(x)[-1]


@dataclass(frozen=True)
class SpectralTestConfig:
    mu_f: float
    mu_2: float
    eps: float
    delta: float
    n: int

    def __post_init__(self):
        for name in ("mu_f", "mu_2", "eps", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass
class SpectralTestResult:
    pass_rate: float
    deviations: np.ndarray
    target_rate: float

    @property
    def passed(self) -> bool:
        return self.pass_rate >= self.target_rate


def spectral_property_test(
    sketch_factory: Callable,
    U,
    cfg: SpectralTestConfig,
    trials: int = 100,
    seed: SeedLike = SeedPath(),
) -> SpectralTestResult:
    """Fraction of sketches with ``||U^T S^T S U - U^T U||_op <= eps``.

    ``U`` must respect the norm budgets ``||U||_F^2 <= mu_f`` and
    ``||U||_op^2 <= mu_2``.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] != cfg.n:
        raise ValueError(f"U must have {cfg.n} columns")
    fro2 = float(np.sum(U * U))
    op2 = operator_norm(U) ** 2
    slack = 1e-12 * max(1.0, fro2)
    if fro2 > cfg.mu_f + slack or op2 > cfg.mu_2 + slack:
        raise ValueError(
            f"U violates the norm budgets: ||U||_F^2={fro2:.4g} (<= {cfg.mu_f}), "
            f"||U||_op^2={op2:.4g} (<= {cfg.mu_2})"
        )
    gram = U.T @ U
    seeds = trial_seeds(seed, trials)
    sk = sketch_factory(seeds)
    # rows of U^T broadcast against the trial batch: (n, 1, d') -> (n, trials, m)
    su = np.moveaxis(np.asarray(sk.apply(U.T[:, None, :])), 0, 1)
    devs = np.empty(trials)
    for t in range(trials):
        devs[t] = operator_norm(su[t] @ su[t].T - gram)
    rate = float(np.mean(devs <= cfg.eps))
    return SpectralTestResult(rate, devs, 1.0 - cfg.delta)


class IdentitySketch:
    """Deterministic identity map, broadcast over a batch (testing aid)."""

    def __init__(self, dim: int, seeds=None):
        self.output_dim = self.input_dim = dim
        self.batch_shape = () if seeds is None else np.shape(seeds)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(x, np.broadcast_shapes(x.shape, self.batch_shape + (self.input_dim,)))


def degree_q_tensorsketch(x, q: int, m: int, seeds) -> np.ndarray:
    """Monolithic degree-``q`` TensorSketch of ``x^{⊗q}``.

    ``q`` independent CountSketches share one FFT: the result is the cyclic
    convolution of the ``q`` bucket vectors.
    """
    x = np.asarray(x, dtype=np.float64)
    spectrum = None
    for i in range(q):
        cs = CountSketch(x.size, m, derive_values(seeds, "countsketch", q, i))
        f = fft(cs.apply(x))
        spectrum = f if spectrum is None else spectrum * f
    # unitary FFT: convolution of q vectors = m^{(q-1)/2} * ifft(prod fft)
    return (m ** ((q - 1) / 2)) * fft(spectrum, inverse=True).real


def tensorsketch_variance_probe(
    d: int, q_deg: int, m: int, trials: int, seed: SeedLike = SeedPath(), chunk: int = 10_000
) -> MomentEstimate:
    """Normalized fourth moment ``E ||M x^{⊗q}||^4 / ||x^{⊗q}||^4`` for all-ones ``x``.

    ``M`` is the degree-``q`` TensorSketch.  The returned estimate is over
    the per-trial values ``(||Mx||^2 / d^q)^2``.
    """
    if q_deg < 1 or q_deg > d:
        raise ValueError(f"need 1 <= q <= d, got q={q_deg}, d={d}")
    x = np.ones(d)

    def sample(seeds):
        z = degree_q_tensorsketch(x, q_deg, m, seeds)
        return (np.sum(z * z, axis=-1) / float(d) ** q_deg) ** 2

    return monte_carlo(sample, trials, seed, chunk)


def recursive_variance_probe(
    d: int, p: int, m: int, trials: int, seed: SeedLike = SeedPath(), variant=CONST_PROB, chunk: int = 10_000
) -> MomentEstimate:
    """Same statistic as :func:`tensorsketch_variance_probe`, for the recursive sketch."""
    x = np.ones(d)

    def sample(seeds):
        z = RecursiveSketch(d, p, m, variant, seeds).apply_point(x)
        return (np.sum(z * z, axis=-1) / float(d) ** p) ** 2

    return monte_carlo(sample, trials, seed, chunk)


def tensorsketch_fourth_moment_exact(d: int, q: int, m: int) -> float:
    """Closed-form normalized fourth moment of the probe under fully random hashing.

    In the Fourier domain ``||Mx||^2 = m^{q-1} sum_f prod_k |c_k(f)|^2`` with
    independent factors, so the fourth moment reduces to the single-sketch
    cross moments ``E|c(f)|^2 |c(g)|^2 = m^{-2}(d^2 + d(d-1)([f+g=0] + [f=g]))``
    for the all-ones input; counting the frequency pairs of each kind gives
    the expression below.
    """
    a = 1.0 + (d - 1) / d
    b = 1.0 + 2.0 * (d - 1) / d
    both = 2 if m % 2 == 0 else 1
    one = m - both
    neither = m * m - both - 2 * one
    return (neither + 2 * one * a**q + both * b**q) / (m * m)


def tensorsketch_fourth_moment_bound(q: int, m: int) -> float:
    """Lower bound ``3^q / (2 m^2)`` on the normalized fourth moment (requires ``q <= d``)."""
    return 3.0**q / (2.0 * m * m)


__all__ = [
    "ConvergenceError",
    "IdentitySketch",
    "MomentEstimate",
    "SpectralTestConfig",
    "SpectralTestResult",
    "clamp_psd_eigenvalues",
    "degree_q_tensorsketch",
    "estimate_moments",
    "monte_carlo",
    "operator_norm",
    "psd_sqrt_inv",
    "recursive_variance_probe",
    "spectral_property_test",
    "symmetric_eig",
    "tensorsketch_fourth_moment_bound",
    "tensorsketch_fourth_moment_exact",
    "tensorsketch_variance_probe",
]
