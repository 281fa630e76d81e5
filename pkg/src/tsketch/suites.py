"""Verification suites: seeded statistical checks with explicit thresholds.

Each suite returns a JSON-serializable report ``{"suite", "passed", "checks"}``
where every check records its statistic, threshold and verdict.  The CLI's
``verify`` command is a thin wrapper around :func:`run_suite`.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .base_sketches import CountSketch, TensorSrht
from .hashing import SeedPath
from .kernels import amp_error, gram_polynomial, ose_spectral_error, statistical_dimension_of, taylor_tail
from .oracle import (
    SpectralTestConfig,
    estimate_moments,
    spectral_property_test,
    tensorsketch_fourth_moment_bound,
    tensorsketch_fourth_moment_exact,
    tensorsketch_variance_probe,
)
from .recursive import CONST_PROB, RecursiveSketch, high_prob, target_dim_const_prob


def _check(name: str, statistic, threshold, passed: bool, **extra) -> dict:
    out = {"name": name, "statistic": statistic, "threshold": threshold, "passed": bool(passed)}
    out.update(extra)
    return out


def _report(suite: str, checks: list[dict], **extra) -> dict:
    out = {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks}
    out.update(extra)
    return out


def _rng(seed: SeedPath, tag: str) -> np.random.Generator:
    # test data (not sketch randomness) comes from numpy, keyed by the seed path
    return np.random.default_rng(seed.derive(tag).value)


def suite_unbiased(trials: int = 20_000, seed: SeedPath = SeedPath()) -> dict:
    """Mean of <Pi x^{⊗p}, Pi y^{⊗p}> within 4 standard errors of <x, y>^p."""
    rng = _rng(seed, "unbiased-data")
    checks = []
    for name, variant in (("const-prob", CONST_PROB), ("high-prob", high_prob(4))):
        for p in (2, 3):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            est = estimate_moments(
                lambda s: RecursiveSketch(4, p, 16, variant, s), x, y, trials, seed.derive(name, p)
            )
            target = float(x @ y) ** p
            z = abs(est.mean - target) / est.std_err
            checks.append(_check(f"{name} p={p}", z, 4.0, z <= 4.0, mean=est.mean, target=target))
    return _report("unbiased", checks)


def suite_second_moment(trials: int = 20_000, seed: SeedPath = SeedPath()) -> dict:
    """CountSketch variance halves when m doubles; tree variance grows slowly with p."""
    rng = _rng(seed, "second-moment-data")
    x, y = rng.standard_normal(16), rng.standard_normal(16)
    v = {}
    for m in (16, 32):
        v[m] = estimate_moments(lambda s: CountSketch(16, m, s), x, y, trials, seed.derive("cs", m)).variance
    ratio = v[16] / v[32]
    checks = [_check("countsketch var(m=16)/var(m=32)", ratio, [1.5, 2.7], 1.5 <= ratio <= 2.7)]
    xs, ys = rng.standard_normal(8), rng.standard_normal(8)
    norm = {}
    for p in (2, 4):
        est = estimate_moments(
            lambda s: RecursiveSketch(8, p, 64, CONST_PROB, s), xs, ys, trials, seed.derive("tree", p)
        )
        norm[p] = est.variance * 64 / (float(xs @ xs) ** p * float(ys @ ys) ** p)
    growth = norm[4] / norm[2]
    checks.append(_check("tree normalized variance p=4 / p=2", growth, 4.0, growth <= 4.0))
    return _report("second-moment", checks)


def ose_dataset(seed: SeedPath = SeedPath(), n: int = 16, d: int = 32) -> np.ndarray:
    """Unit-norm columns with a decaying spectrum, so ``s_lambda`` is small."""
    rng = _rng(seed, "ose-data")
    basis = np.linalg.qr(rng.standard_normal((d, 4)))[0]
    X = basis @ rng.standard_normal((4, n)) + 0.05 * rng.standard_normal((d, n))
    return X / np.linalg.norm(X, axis=0)


def suite_ose(
    trials: int = 100, seed: SeedPath = SeedPath(), c: float = 8.0, eps: float = 0.5, lam: float | None = None
) -> dict:
    """Pass rate of the subspace-embedding sandwich at the sized target dimension."""
    X = ose_dataset(seed)
    K = gram_polynomial(X, 2)
    lam = lam if lam is not None else 1.0
    s_lam = statistical_dimension_of(K, lam)
    m = target_dim_const_prob(2, max(1.0, s_lam), eps, c)
    errs = np.array(
        [ose_spectral_error(RecursiveSketch(32, 2, m, CONST_PROB, seed.derive("ose", 0, t)).apply_matrix(X), K, lam)
         for t in range(trials)]
    )
    rate = float(np.mean(errs <= eps))
    checks = [
        _check("statistical dimension in [2, 6]", s_lam, [2.0, 6.0], 2.0 <= s_lam <= 6.0),
        _check(f"pass rate at m={m}", rate, 0.9, rate >= 0.9, median_error=float(np.median(errs))),
    ]
    return _report("ose", checks, m=m, lam=lam)


def suite_amp(trials: int = 100, seed: SeedPath = SeedPath(), c: float = 4.0, eps: float = 0.25) -> dict:
    """Approximate matrix product at ``m = c p / eps^2`` for fixed random 16x8 inputs."""
    rng = _rng(seed, "amp-data")
    C, D = rng.standard_normal((16, 8)), rng.standard_normal((16, 8))
    p = 2
    m = int(math.ceil(c * p / eps**2))
    errs = []
    for t in range(trials):
        S = RecursiveSketch(4, p, m, CONST_PROB, seed.derive("amp", 0, t)).explicit_matrix()
        errs.append(amp_error(C, D, lambda A: S @ A))
    errs = np.array(errs)
    rate = float(np.mean(errs <= eps))
    return _report("amp", [_check(f"pass rate at m={m}", rate, 0.9, rate >= 0.9, median_error=float(np.median(errs)))])


def lemma_spectral_dim(n: int, d: int, k: int, eps: float, delta: float, mu_f: float, mu_2: float) -> int:
    """Target dimension ``log(n/delta) log^2(n d k/(eps delta)) mu_F mu_2 / eps^2`` (constant 1)."""
    value = math.log(n / delta) * math.log(n * d * k / (eps * delta)) ** 2 * mu_f * mu_2 / eps**2
    return int(math.ceil(value))


def suite_spectral(trials: int = 100, seed: SeedPath = SeedPath(), eps: float = 0.5, delta: float = 0.05) -> dict:
    """Spectral property of TensorSRHT on 16-dimensional (4 x 4) inputs, n = 8."""
    rng = _rng(seed, "spectral-data")
    n, side = 8, 4
    U = np.linalg.qr(rng.standard_normal((side * side, n)))[0]
    U /= math.sqrt(2.0)
    mu_f = float(np.sum(U * U))
    mu_2 = 0.5
    cfg = SpectralTestConfig(mu_f, mu_2, eps, delta, n)
    m = lemma_spectral_dim(n, side * side, 2, eps, delta, mu_f, mu_2)
    res = spectral_property_test(lambda s: TensorSrht(side, m, s), U, cfg, trials, seed.derive("spectral"))
    target = 1.0 - 2.0 * delta
    return _report(
        "spectral",
        [_check(f"pass rate at m={m}", res.pass_rate, target, res.pass_rate >= target,
                max_deviation=float(res.deviations.max()))],
    )


def suite_variance_probe(trials: int = 20_000, seed: SeedPath = SeedPath(), d: int = 8, m: int = 16) -> dict:
    """Degree-q TensorSketch fourth moments for q = 1..5 against the lower bound and closed form."""
    rows = []
    checks = []
    prev_var = None
    for q in range(1, 6):
        est = tensorsketch_variance_probe(d, q, m, trials, seed.derive("probe", q))
        bound = tensorsketch_fourth_moment_bound(q, m)
        exact = tensorsketch_fourth_moment_exact(d, q, m)
        rows.append({"q": q, "fourth_moment": est.mean, "std_err": est.std_err, "lower_bound": bound, "closed_form": exact})
        checks.append(_check(f"q={q} above 3^q/(2m^2)", est.mean + 3 * est.std_err, bound, est.mean + 3 * est.std_err >= bound))
        z = abs(est.mean - exact) / est.std_err
        checks.append(_check(f"q={q} matches closed form", z, 4.0, z <= 4.0))
        var = est.mean - 1.0
        if prev_var is not None:
            growth = var / prev_var
            checks.append(_check(f"variance growth q={q - 1}->{q}", growth, 1.5, growth >= 1.5))
        prev_var = var
    return _report("variance-probe", checks, table=rows)


def suite_tail(trials: int = 0, seed: SeedPath = SeedPath()) -> dict:
    """Taylor tail anchors: the e - 1 value, monotonicity and the long-sum cross-check."""
    checks = []
    v = taylor_tail(0, 1.0, 1)
    checks.append(_check("taylor_tail(0, r=1, n=1) = e - 1", v, math.e - 1.0, abs(v - (math.e - 1.0)) <= 1e-12))
    for r in (0.5, 1.0, 2.0, 5.0):
        tails = [taylor_tail(q, r, 10) for q in range(40)]
        positive = [t for t in tails if t > 0]
        ok = all(a > b for a, b in zip(positive, positive[1:]))
        checks.append(_check(f"strictly decreasing in q (r={r})", len(positive), None, ok))
    terms, term = [], 1.0
    for l in range(1, 500):
        term *= 4.0 / l
        if l >= 4:
            terms.append(term)
    long_sum = math.fsum(terms)
    rel = abs(taylor_tail(3, 2.0, 1) - long_sum) / long_sum
    checks.append(_check("r=2 vs 500-term sum", rel, 1e-12, rel <= 1e-12))
    return _report("tail", checks)


SUITES: dict[str, Callable[..., dict]] = {
    "unbiased": suite_unbiased,
    "second-moment": suite_second_moment,
    "ose": suite_ose,
    "amp": suite_amp,
    "spectral": suite_spectral,
    "variance-probe": suite_variance_probe,
    "tail": suite_tail,
}


def run_suite(name: str, trials: int | None = None, seed: SeedPath = SeedPath(), **kw) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    fn = SUITES[name]
    if trials is not None:
        kw["trials"] = trials
    return fn(seed=seed, **kw)
