"""Sketch x^{⊗p} without ever forming it, and check against the explicit map.

Run: python demos/sketch_basics.py
"""

import numpy as np

from tsketch.hashing import SeedPath
from tsketch.recursive import CONST_PROB, RecursiveSketch, high_prob
from tsketch.tensor_core import self_tensor

rng = np.random.default_rng(1)
d, p, m = 4, 3, 8
x = rng.standard_normal(d)
y = x + 0.5 * rng.standard_normal(d)

for variant in (CONST_PROB, high_prob(4)):
    sk = RecursiveSketch(d, p, m, variant, SeedPath(7))
    # small enough (4^3 = 64 columns) to materialize the sketch as a matrix
    S = sk.explicit_matrix()
    direct = sk.apply_point(x)
    explicit = S @ self_tensor(x, p)
    print(f"{variant.name:>10}: |direct - explicit| = {np.linalg.norm(direct - explicit):.2e}")

# averaging over many independent sketches recovers <x, y>^p
seeds = np.arange(50_000, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
sk = RecursiveSketch(d, p, m, CONST_PROB, seeds)
estimates = np.sum(sk.apply(x) * sk.apply(y), axis=-1)
print(f"<x,y>^p = {float(x @ y) ** p:.4f}, mean of 50000 sketched estimates = {estimates.mean():.4f} "
      f"(std err {estimates.std() / np.sqrt(estimates.size):.4f})")

# a large degree-3 sketch of d = 1000 columns: d^p = 1e9 would not fit, the sketch does
X = rng.standard_normal((1000, 50)) / np.sqrt(1000)
Y = RecursiveSketch(1000, 3, 256, CONST_PROB, SeedPath(3)).apply_matrix(X, threads=4)
print(f"sketched 50 columns of dimension 1000^3 into {Y.data.shape}")
