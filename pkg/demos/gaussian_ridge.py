"""Gaussian-kernel features and polynomial-kernel ridge regression from sketches.

Run: python demos/gaussian_ridge.py
"""

import numpy as np

from tsketch.hashing import SeedPath
from tsketch.kernels import (
    GaussianFeatureMap,
    KernelJob,
    gaussian_degree,
    gram_gaussian,
    gram_polynomial,
    ose_spectral_error,
    sketch_ridge_regression,
    statistical_dimension_of,
    taylor_tail,
)
from tsketch.recursive import CONST_PROB

rng = np.random.default_rng(4)
X = rng.standard_normal((5, 30))
X = X / np.linalg.norm(X, axis=0) * np.sqrt(rng.uniform(0.1, 1.0, 30))  # every ||x||^2 <= 1

lam, eps = 0.1, 0.5
q = gaussian_degree(1.0, X.shape[1], eps, lam)
print(f"Taylor degree {q}: tail bound {taylor_tail(q, 1.0, X.shape[1]):.2e} <= eps*lam/2 = {eps * lam / 2}")

G = gram_gaussian(X)
s_lam = statistical_dimension_of(G, lam)
print(f"statistical dimension at lambda={lam}: {s_lam:.2f}")
for rows in (16, 64, 256):
    gfm = GaussianFeatureMap(5, KernelJob(lam, eps), X.shape[1], s_lam, CONST_PROB, SeedPath(11), dims=[1] + [rows] * 64)
    err = ose_spectral_error(gfm.apply(X), G, lam)
    print(f"  {rows:>4} rows per degree (m={gfm.m:>5}): spectral error {err:.3f}")

b = rng.standard_normal(5) / np.sqrt(5)
lam = 0.5
s_poly = statistical_dimension_of(gram_polynomial(X, 2), lam)
for m in (16, 64, 256, 1024):
    res = sketch_ridge_regression(X, b, 2, lam, m, CONST_PROB, SeedPath(12))
    print(f"ridge p=2, m={m:>5}: objective ratio {res.ratio:.4f} (s_lambda = {s_poly:.2f})")
