import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tsketch.hashing import SeedPath
from tsketch.oracle import estimate_moments
from tsketch.recursive import (
    CONST_PROB,
    RecursiveSketch,
    SketchVariant,
    apply_matrix,
    apply_point,
    build,
    explicit_matrix,
    high_prob,
    target_dim_const_prob,
    target_dim_high_prob,
)
from tsketch.tensor_core import SizeGuardError, guard_limit, self_tensor

VARIANTS = [CONST_PROB, high_prob(2)]


def close_to(got, ref, x, p, tol=1e-9):
    """Relative error, with ||x||^p as the floor when the image cancels to ~0."""
    scale = max(np.linalg.norm(ref), np.linalg.norm(x) ** p)
    return np.linalg.norm(got - ref) <= tol * scale


class TestStructure:
    def test_padding_counts(self):
        sk = build(3, 3, 4)
        assert sk.q == 4 and len(sk.leaves) == 4
        assert [len(level) for level in sk.levels] == [2, 1]
        assert sk.n_internal == 3

    def test_no_padding_when_power_of_two(self):
        sk = build(3, 4, 4)
        assert sk.q == 4

    @pytest.mark.parametrize("p", [2, 3, 5, 8])
    def test_node_counts(self, p):
        sk = build(2, p, 4)
        assert len(sk.leaves) == sk.q
        assert sum(len(level) for level in sk.levels) == sk.q - 1

    def test_rebuild_is_identical(self):
        a = explicit_matrix(build(3, 2, 4, CONST_PROB, SeedPath(9)))
        b = explicit_matrix(build(3, 2, 4, CONST_PROB, SeedPath(9)))
        np.testing.assert_array_equal(a, b)
        c = explicit_matrix(build(3, 2, 4, CONST_PROB, SeedPath(10)))
        assert not np.array_equal(a, c)

    def test_explicit_shape(self):
        assert explicit_matrix(build(3, 3, 4)).shape == (4, 27)

    def test_const_prob_rounds_m(self):
        assert build(3, 2, 5).m == 8

    def test_variant_validation(self):
        with pytest.raises(ValueError):
            SketchVariant("high-prob", 0)
        with pytest.raises(ValueError):
            RecursiveSketch(3, 2, 4, high_prob(8))
        with pytest.raises(ValueError):
            RecursiveSketch(3, 1, 4)


class TestCorrectness:
    @pytest.mark.parametrize("variant", VARIANTS, ids=["const", "high"])
    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_matches_materialized(self, variant, p, rng):
        for seed in range(20):
            sk = RecursiveSketch(3, p, 4, variant, SeedPath(seed))
            M = explicit_matrix(sk)
            x = rng.standard_normal(3)
            ref = M @ self_tensor(x, p)
            assert close_to(apply_point(sk, x), ref, x, p)

    @pytest.mark.parametrize("variant", VARIANTS, ids=["const", "high"])
    @pytest.mark.parametrize("d,p", [(2, 2), (3, 3), (2, 4)])
    def test_two_construction_orders(self, variant, d, p):
        sk = RecursiveSketch(d, p, 4, variant, SeedPath(3))
        np.testing.assert_allclose(sk.explicit_matrix("kron"), sk.explicit_matrix("factored"), atol=1e-10)

    def test_zero_input(self):
        sk = build(3, 3, 8)
        np.testing.assert_array_equal(apply_point(sk, np.zeros(3)), np.zeros(8))

    def test_padding_uses_first_basis_vector(self, rng):
        """A degree-3 tree acts like the degree-4 tree on x ⊗ x ⊗ x ⊗ e1."""
        sk = build(3, 3, 4, CONST_PROB, SeedPath(4))
        full = sk.explicit_matrix("kron")
        x = rng.standard_normal(3)
        e1 = np.eye(3)[0]
        # re-derive the full degree-q matrix by lifting the restriction
        with guard_limit(2**24):
            sk4 = build(3, 4, 4, CONST_PROB, SeedPath(4))
        big = sk4.explicit_matrix()
        tensor = np.kron(e1, self_tensor(x, 3))
        np.testing.assert_allclose(full @ self_tensor(x, 3), big @ tensor, atol=1e-12)

    def test_linear_on_arbitrary_vectors(self, rng):
        sk = build(3, 2, 4, CONST_PROB, SeedPath(2))
        M = explicit_matrix(sk)
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        combo = 2.0 * self_tensor(x, 2) - 0.5 * self_tensor(y, 2)
        np.testing.assert_allclose(M @ combo, 2.0 * apply_point(sk, x) - 0.5 * apply_point(sk, y), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        d=st.integers(2, 4),
        p=st.integers(2, 4),
        m=st.sampled_from([4, 8]),
        high=st.booleans(),
        seed=st.integers(0, 2**40),
    )
    def test_equivalence_property(self, d, p, m, high, seed):
        variant = high_prob(2) if high else CONST_PROB
        sk = RecursiveSketch(d, p, m, variant, SeedPath(seed))
        x = np.random.default_rng(seed).standard_normal(d)
        ref = explicit_matrix(sk) @ self_tensor(x, p)
        assert close_to(apply_point(sk, x), ref, x, p)


class TestApplyMatrix:
    def test_single_column(self, rng):
        sk = build(5, 3, 16)
        x = rng.standard_normal(5)
        np.testing.assert_array_equal(apply_matrix(sk, x[:, None]).data[:, 0], apply_point(sk, x))

    def test_columns_match_points(self, rng):
        sk = build(5, 3, 16, high_prob(3))
        X = rng.standard_normal((5, 7))
        out = apply_matrix(sk, X).data
        for i in range(7):
            np.testing.assert_allclose(out[:, i], apply_point(sk, X[:, i]), atol=1e-13)

    @pytest.mark.parametrize("variant", VARIANTS, ids=["const", "high"])
    def test_threads_bitwise_identical(self, variant, rng):
        sk = RecursiveSketch(6, 3, 32, variant, SeedPath(1))
        X = rng.standard_normal((6, 101))
        serial = sk.apply_matrix(X, threads=1).data
        for threads in (2, 3, 8):
            assert serial.tobytes() == sk.apply_matrix(X, threads=threads).data.tobytes()

    def test_sparse_input(self, rng):
        sk = build(300, 2, 32)
        X = sp.random(300, 25, density=0.03, format="csc", random_state=3)
        np.testing.assert_allclose(sk.apply_matrix(X).data, sk.apply_matrix(X.toarray()).data, atol=1e-12)

    def test_provenance_regenerates(self, rng):
        sk = RecursiveSketch(4, 3, 16, high_prob(2), SeedPath(12).derive("job", 0, 1))
        X = rng.standard_normal((4, 6))
        out = sk.apply_matrix(X)
        prov = out.provenance
        seed = SeedPath(prov["seed"]["master"], tuple(tuple(s) for s in prov["seed"]["path"]))
        again = RecursiveSketch(prov["d"], prov["p"], prov["m"], high_prob(prov["sparsity"]), seed)
        assert again.apply_matrix(X).data.tobytes() == out.data.tobytes()

    def test_never_materializes(self, rng):
        sk = build(1000, 3, 64)
        X = rng.standard_normal((1000, 4))
        with guard_limit(10_000):
            out = sk.apply_matrix(X)
            with pytest.raises(SizeGuardError):
                sk.explicit_matrix()
        assert out.shape == (64, 4)

    def test_input_checks(self):
        sk = build(3, 2, 4)
        with pytest.raises(ValueError):
            sk.apply_matrix(np.ones((4, 2)))
        with pytest.raises(ValueError):
            sk.apply_matrix(np.full((3, 2), np.inf))


class TestSizing:
    def test_const_prob_anchor(self):
        assert target_dim_const_prob(2, 4, 0.5, c=8) == 1024

    def test_const_prob_power_of_two(self):
        m = target_dim_const_prob(3, 2.5, 0.3)
        assert m & (m - 1) == 0 and m >= 8 * 3 * 2.5**2 / 0.09

    @given(
        st.integers(1, 8), st.floats(1, 50), st.floats(0.05, 0.95),
        st.integers(1, 8), st.floats(1, 50), st.floats(0.05, 0.95),
    )
    def test_const_prob_monotone(self, p1, s1, e1, p2, s2, e2):
        lo = (min(p1, p2), min(s1, s2), max(e1, e2))
        hi = (max(p1, p2), max(s1, s2), min(e1, e2))
        assert target_dim_const_prob(*lo) <= target_dim_const_prob(*hi)

    def test_delta_scaling(self):
        assert target_dim_const_prob(2, 4, 0.5, delta=0.1) == 1024
        assert target_dim_const_prob(2, 4, 0.5, delta=0.01) == 16384

    def test_high_prob_degenerate_delta(self):
        m, s = target_dim_high_prob(2, 1.0, 0.99, 1, 1, 0.999999)
        assert m >= 1 and 1 <= s <= m

    @settings(max_examples=50)
    @given(st.integers(1, 6), st.floats(1, 20), st.floats(0.1, 0.9), st.integers(1, 100), st.integers(1, 100),
           st.floats(0.01, 0.5))
    def test_high_prob_monotone(self, p, s_lam, eps, n, d, delta):
        m, s = target_dim_high_prob(p, s_lam, eps, n, d, delta)
        assert 1 <= s <= m
        assert target_dim_high_prob(p + 1, s_lam, eps, n, d, delta)[0] >= m
        assert target_dim_high_prob(p, s_lam * 2, eps, n, d, delta)[0] >= m
        assert target_dim_high_prob(p, s_lam, eps / 2, n, d, delta)[0] >= m
        assert target_dim_high_prob(p, s_lam, eps, n * 2, d, delta)[0] >= m
        assert target_dim_high_prob(p, s_lam, eps, n, d * 2, delta)[0] >= m
        assert target_dim_high_prob(p, s_lam, eps, n, d, delta / 2)[0] >= m

    @pytest.mark.parametrize("bad", [dict(eps=0.0), dict(eps=1.0), dict(s_lambda=0.5), dict(p=0)])
    def test_validation(self, bad):
        args = dict(p=2, s_lambda=2.0, eps=0.5)
        args.update(bad)
        with pytest.raises(ValueError):
            target_dim_const_prob(**args)


@pytest.mark.parametrize("variant", VARIANTS, ids=["const", "high"])
def test_norm_unbiased(variant):
    x = np.random.default_rng(8).standard_normal(3)
    est = estimate_moments(lambda s: RecursiveSketch(3, 3, 8, variant, s), x, x, 100_000, SeedPath(21))
    assert est.within(float(x @ x) ** 3, 4.0)


def test_batched_trees_match_single():
    from tsketch.hashing import trial_seeds

    seeds = trial_seeds(SeedPath(3), 3)
    x = np.random.default_rng(1).standard_normal(4)
    for variant in VARIANTS:
        batched = RecursiveSketch(4, 3, 8, variant, seeds).apply_point(x)
        for t in range(3):
            np.testing.assert_array_equal(batched[t], RecursiveSketch(4, 3, 8, variant, seeds[t]).apply_point(x))
