import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pera.errors import DomainError, ShapeError
from pera.numerics import (
    finite_diff_grad,
    hadamard,
    matmul,
    numeric_rank,
    rel_frobenius,
    singular_values,
    spectral_norm,
    svd,
)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.5, -2.0], [0.25, 7.0]])
        assert np.array_equal(matmul(np.eye(2), m), m)

    def test_hand_example(self):
        assert np.array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 3))
        b = rng.standard_normal((3, 5))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-13)
        np.testing.assert_allclose(matmul(a, b), matmul(b.T, a.T).T, rtol=0, atol=1e-13)

    def test_associativity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p, q, s, t = rng.integers(1, 20, size=4)
            a, b, c = rng.standard_normal((p, q)), rng.standard_normal((q, s)), rng.standard_normal((s, t))
            assert rel_frobenius(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((40, 30)), rng.standard_normal((30, 20))
        assert matmul(a, b).tobytes() == matmul(a, b).tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_non_finite(self):
        with pytest.raises(DomainError):
            matmul(np.array([[np.nan]]), np.ones((1, 1)))


class TestHadamard:
    def test_examples(self):
        assert np.array_equal(hadamard([[1, 3]], [[2, 4]]), [[2, 12]])
        v = np.array([[1.0, -2.0, 3.0]])
        assert np.array_equal(hadamard(v, np.zeros_like(v)), np.zeros_like(v))
        assert np.all(hadamard(v, v) >= 0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hadamard(np.ones((2, 2)), np.ones((2, 3)))


SHAPES = [(8, 8), (16, 5), (5, 16), (1, 7), (7, 1), (33, 20)]


class TestSvd:
    def test_diagonal(self):
        np.testing.assert_allclose(singular_values(np.diag([3.0, 2.0, 1.0])), [3, 2, 1], atol=1e-14)

    def test_unsorted_diagonal(self):
        np.testing.assert_allclose(singular_values(np.diag([1.0, -5.0, 2.0])), [5, 2, 1], atol=1e-14)

    def test_rank_one(self):
        rng = np.random.default_rng(3)
        s = singular_values(np.outer(rng.standard_normal(9), rng.standard_normal(6)))
        assert s[1] <= 1e-12 * s[0]

    def test_frobenius_identity(self):
        m = np.random.default_rng(4).standard_normal((16, 16))
        s = singular_values(m)
        assert abs(np.sqrt(np.sum(s**2)) - np.linalg.norm(m)) < 1e-10 * np.linalg.norm(m)

    @pytest.mark.parametrize("shape", SHAPES)
    def test_invariants_random(self, shape):
        rng = np.random.default_rng(sum(shape))
        for _ in range(100):
            m = rng.standard_normal(shape)
            dec = svd(m)
            s = dec.singular_values
            assert np.all(np.diff(s) <= 0) and s[-1] >= 0
            assert np.linalg.norm(dec.reconstruct() - m) < 1e-9 * np.linalg.norm(m)
            for q in (dec.left_vectors, dec.right_vectors):
                assert np.abs(q.T @ q - np.eye(q.shape[1])).max() < 1e-9

    def test_rank_deficient_vectors_orthonormal(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 10))
        dec = svd(m)
        for q in (dec.left_vectors, dec.right_vectors):
            assert np.abs(q.T @ q - np.eye(q.shape[1])).max() < 1e-9
        assert np.linalg.norm(dec.reconstruct() - m) < 1e-9 * np.linalg.norm(m)

    def test_zero_matrix(self):
        dec = svd(np.zeros((4, 3)))
        assert np.all(dec.singular_values == 0)
        assert np.abs(dec.left_vectors.T @ dec.left_vectors - np.eye(3)).max() < 1e-12

    def test_matches_lapack(self):
        m = np.random.default_rng(6).standard_normal((20, 14))
        np.testing.assert_allclose(singular_values(m), np.linalg.svd(m, compute_uv=False), rtol=1e-12)

    @pytest.mark.slow
    def test_max_size(self):
        m = np.random.default_rng(7).standard_normal((512, 512))
        dec = svd(m)
        assert np.linalg.norm(dec.reconstruct() - m) < 1e-9 * np.linalg.norm(m)

    def test_deterministic(self):
        m = np.random.default_rng(8).standard_normal((10, 10))
        assert svd(m).left_vectors.tobytes() == svd(m).left_vectors.tobytes()

    def test_limits(self):
        with pytest.raises(ShapeError):
            svd(np.ones((513, 2)))
        with pytest.raises(DomainError):
            svd(np.array([[1.0, np.inf]]))

    def test_truncate(self):
        m = np.diag([4.0, 3.0, 1.0])
        np.testing.assert_allclose(svd(m).truncate(2), np.diag([4.0, 3.0, 0.0]), atol=1e-14)
        assert spectral_norm(m) == pytest.approx(4.0)


class TestNumericRank:
    def test_threshold(self):
        assert numeric_rank(np.diag([1.0, 1e-15]), 1e-10) == 1

    def test_zero(self):
        assert numeric_rank(np.zeros((4, 4))) == 0

    def test_product_rank(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            m = rng.standard_normal((16, 5)) @ rng.standard_normal((5, 16))
            s = singular_values(m)
            assert s[5] / s[0] < 1e-10
            assert numeric_rank(m) == 5

    def test_tolerance_domain(self):
        for tol in (0.0, 1.0, -1e-3):
            with pytest.raises(DomainError):
                numeric_rank(np.eye(2), tol)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.lists(st.floats(1e-15, 0.99), min_size=2, max_size=6))
    def test_monotone_in_tolerance(self, seed, tols):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((10, 4)) @ rng.standard_normal((4, 10)) + 1e-8 * rng.standard_normal((10, 10))
        tols = sorted(tols)
        ranks = [numeric_rank(m, t) for t in tols]
        assert all(x >= y for x, y in zip(ranks, ranks[1:]))


class TestFiniteDiff:
    def test_quadratic(self):
        assert finite_diff_grad(lambda x: x[0] ** 2, [3.0])[0] == pytest.approx(6.0, abs=1e-7)

    def test_constant(self):
        np.testing.assert_allclose(finite_diff_grad(lambda x: 4.0, np.ones(5)), 0.0, atol=1e-12)

    def test_sine(self):
        g = finite_diff_grad(lambda x: np.sin(x[0]) + x[1] ** 2, [0.0, 1.0])
        np.testing.assert_allclose(g, [1.0, 2.0], atol=1e-7)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_exact_on_quadratics(self, seed, d):
        rng = np.random.default_rng(seed)
        q = rng.uniform(-3, 3, (d, d))
        c = rng.uniform(-3, 3, d)
        x = rng.uniform(-3, 3, d)
        g = finite_diff_grad(lambda v: v @ q @ v + c @ v + 1.5, x)
        np.testing.assert_allclose(g, (q + q.T) @ x + c, atol=1e-7)

    def test_errors(self):
        with pytest.raises(DomainError):
            finite_diff_grad(lambda x: x[0], [1.0], step=0.0)
        with pytest.raises(DomainError):
            finite_diff_grad(lambda x: x[0] if x[0] > 0 else float("nan"), [0.0])

    def test_input_untouched(self):
        x = np.array([1.0, 2.0])
        finite_diff_grad(lambda v: v.sum(), x)
        assert np.array_equal(x, [1.0, 2.0])
