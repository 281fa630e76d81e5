"""Oblivious sketches for tensor powers and polynomial/Gaussian kernels."""

from .base_sketches import CountSketch, Osnap, Srht, TensorSketch2, TensorSrht
from .hashing import DEFAULT_SEED, SeedPath, derive_seed, hash_new, trial_seeds
from .kernels import (
    GaussianFeatureMap,
    KernelJob,
    amp_error,
    gaussian_degree,
    gram_gaussian,
    gram_polynomial,
    ose_spectral_error,
    sketch_ridge_regression,
    statistical_dimension,
    taylor_tail,
)
from .oracle import estimate_moments, operator_norm, psd_sqrt_inv, symmetric_eig
from .recursive import (
    CONST_PROB,
    RecursiveSketch,
    SketchedMatrix,
    high_prob,
    target_dim_const_prob,
    target_dim_high_prob,
)
from .tensor_core import SparseVector, guard_limit, kron_matrix, self_tensor, tensor_product

__version__ = "0.1.0"

__all__ = [
    "CONST_PROB",
    "CountSketch",
    "DEFAULT_SEED",
    "GaussianFeatureMap",
    "KernelJob",
    "Osnap",
    "RecursiveSketch",
    "SeedPath",
    "SketchedMatrix",
    "SparseVector",
    "Srht",
    "TensorSketch2",
    "TensorSrht",
    "amp_error",
    "derive_seed",
    "estimate_moments",
    "gaussian_degree",
    "gram_gaussian",
    "gram_polynomial",
    "guard_limit",
    "hash_new",
    "high_prob",
    "kron_matrix",
    "operator_norm",
    "ose_spectral_error",
    "psd_sqrt_inv",
    "self_tensor",
    "sketch_ridge_regression",
    "statistical_dimension",
    "symmetric_eig",
    "target_dim_const_prob",
    "target_dim_high_prob",
    "taylor_tail",
    "tensor_product",
    "trial_seeds",
]
