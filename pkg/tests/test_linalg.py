"""Tests for the dense matrix primitives.

Oracles used here are independent of the implementations they check:
power iteration + deflation for singular values, the direct covariance
formula for CKA, principal angles for the subspace isometry, and the
closed-form circle-moment value for the quarter-circle integral.
"""

import math
import warnings

import numpy as np
import pytest

from nframe.errors import (
    DegenerateInputError,
    InvalidInputError,
    ShapeError,
    UndefinedStableRankError,
)
from nframe.linalg import (
    linear_cka,
    mc_residual_stable_rank,
    mp_residual_coefficient,
    mp_weight_coefficient,
    random_subspace_isometry,
    singular_values,
    spectral_norm,
    stable_rank,
)

# Closed form for the quarter-circle moments: (6 pi + 2*8^{3/2}/3) / (2 pi (9 + 4 sqrt 2))
MP_CLOSED_FORM = (6 * math.pi + 2 * 8**1.5 / 3) / (2 * math.pi * (9 + 4 * math.sqrt(2)))


def oracle_singular_values(a, iters=5000):
    """Power iteration on the Gram matrix with deflation."""
    a = np.asarray(a, float)
    g = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    g = g.copy()
    rng = np.random.default_rng(12345)
    vals = []
    for _ in range(g.shape[0]):
        v = rng.standard_normal(g.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = g @ v
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                lam = 0.0
                break
            v = w / norm
            lam = float(v @ (g @ v))
        vals.append(max(lam, 0.0))
        g -= lam * np.outer(v, v)
    return np.sqrt(np.sort(vals)[::-1])


def oracle_cka(x, y):
    """Direct evaluation of the covariance formula (materializes p x q)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    num = np.sum((xc.T @ yc) ** 2)
    return num / (np.linalg.norm(xc.T @ xc) * np.linalg.norm(yc.T @ yc))


class TestSingularValues:
    def test_diagonal(self):
        np.testing.assert_allclose(singular_values(np.diag([3.0, 4.0])), [4.0, 3.0])

    def test_zero_matrix(self):
        np.testing.assert_array_equal(singular_values(np.zeros((2, 2))), [0.0, 0.0])

    def test_against_power_iteration_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((6, 3))
        got = singular_values(a)
        want = oracle_singular_values(a)
        np.testing.assert_allclose(got, want, rtol=1e-8)

    def test_length_is_min_dim(self):
        rng = np.random.default_rng(3)
        assert singular_values(rng.standard_normal((9, 4))).shape == (4,)
        assert singular_values(rng.standard_normal((4, 9))).shape == (4,)

    def test_sorted_nonincreasing_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = singular_values(rng.standard_normal((rng.integers(1, 12), rng.integers(1, 12))))
            assert np.all(s >= 0)
            assert np.all(np.diff(s) <= 1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            singular_values(np.array([[1.0, np.nan]]))
        with pytest.raises(InvalidInputError):
            singular_values(np.array([[np.inf], [0.0]]))


class TestStableRank:
    def test_identity(self):
        for k in (1, 2, 5, 17):
            assert stable_rank(np.eye(k)) == pytest.approx(k, rel=1e-12)

    def test_rank_one(self):
        u = np.array([1.0, -2.0, 0.5])
        v = np.array([3.0, 1.0])
        assert stable_rank(np.outer(u, v)) == pytest.approx(1.0, rel=1e-10)

    def test_diag_2_1(self):
        assert stable_rank(np.diag([2.0, 1.0])) == pytest.approx(1.25, rel=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((8, 5))
        base = stable_rank(a)
        for c in (2.0, -3.0, 0.37, 1e3, 1e-4):
            assert stable_rank(c * a) == pytest.approx(base, rel=1e-12)

    def test_zero_matrix_error(self):
        with pytest.raises(UndefinedStableRankError):
            stable_rank(np.zeros((4, 3)))

    def test_bounds_vs_rank(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            rows, cols = rng.integers(1, 15, size=2)
            a = rng.standard_normal((rows, cols))
            r = stable_rank(a)
            assert 1.0 - 1e-12 <= r
            assert r <= np.linalg.matrix_rank(a) + 1e-9
            assert r <= min(rows, cols) + 1e-12

    def test_product_bound(self):
        # r(AB) <= (|A| |B| / |AB|)^2 min{r(A), r(B)} over 1000 random pairs
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 1000:
            l, m, n = rng.integers(1, 21, size=3)
            a = rng.standard_normal((l, m))
            b = rng.standard_normal((m, n))
            ab = a @ b
            if not np.any(ab):
                continue
            ratio = spectral_norm(a) * spectral_norm(b) / spectral_norm(ab)
            bound = ratio**2 * min(stable_rank(a), stable_rank(b))
            assert stable_rank(ab) <= bound + 1e-9
            checked += 1


class TestLinearCka:
    def test_self_similarity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((7, 40))
        assert linear_cka(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((9, 12))
        q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        assert linear_cka(x, x @ q) == pytest.approx(1.0, abs=1e-9)

    def test_scaling_invariance_hand_case(self):
        x = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]
        y = [[2.0, 0.0], [0.0, 2.0], [-2.0, -2.0]]
        assert linear_cka(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_hand_cases_frozen_from_direct_formula(self):
        x = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]
        # [[1,1],[1,-1],[-2,0]] = X times a scaled orthogonal matrix -> 1.0
        assert linear_cka(x, [[1.0, 1.0], [1.0, -1.0], [-2.0, 0.0]]) == pytest.approx(
            1.0, abs=1e-12
        )
        # frozen from oracle_cka: 0.9
        y = [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]
        assert linear_cka(x, y) == pytest.approx(0.9, abs=1e-12)
        assert oracle_cka(x, y) == pytest.approx(0.9, abs=1e-12)

    def test_matches_direct_formula_on_random_inputs(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            k = int(rng.integers(2, 10))
            x = rng.standard_normal((k, int(rng.integers(1, 15))))
            y = rng.standard_normal((k, int(rng.integers(1, 15))))
            assert linear_cka(x, y) == pytest.approx(oracle_cka(x, y), abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 10))
        y = rng.standard_normal((6, 4))
        assert abs(linear_cka(x, y) - linear_cka(y, x)) <= 1e-12

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.standard_normal((5, 8))
            y = rng.standard_normal((5, 8))
            v = linear_cka(x, y)
            assert -1e-12 <= v <= 1.0 + 1e-12

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            linear_cka(np.ones((3, 2)), np.ones((4, 2)))

    def test_constant_input_degenerate(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal((5, 3))
        with pytest.raises(DegenerateInputError):
            linear_cka(np.full((5, 3), 0.1), y)


class TestSubspaceIsometry:
    def test_orthonormal_input_stays_orthonormal(self):
        v = np.zeros((8, 3))
        v[:3, :3] = np.eye(3)
        iso = random_subspace_isometry(8, 3, seed=0)
        vp = iso.map_frame(v)
        np.testing.assert_allclose(vp.T @ vp, np.eye(3), atol=1e-6)

    def test_gram_preserved(self):
        rng = np.random.default_rng(9)
        v = rng.standard_normal((50, 6))
        vp = random_subspace_isometry(50, 6, seed=3).map_frame(v)
        g, gp = v.T @ v, vp.T @ vp
        assert np.linalg.norm(gp - g) <= 1e-6 * np.linalg.norm(g)

    def test_stable_rank_preserved(self):
        rng = np.random.default_rng(10)
        v = rng.standard_normal((40, 5)) @ np.diag([3.0, 2.0, 1.0, 0.5, 0.25])
        vp = random_subspace_isometry(40, 5, seed=8).map_frame(v)
        assert stable_rank(vp) == pytest.approx(stable_rank(v), rel=1e-9)

    def test_principal_angles_nonzero(self):
        # oracle: principal angles via SVD of U1^T U2
        rng = np.random.default_rng(11)
        v = rng.standard_normal((30, 4))
        u1, _ = np.linalg.qr(v)
        for seed in (1, 2):
            vp = random_subspace_isometry(30, 4, seed=seed).map_frame(v)
            u2, _ = np.linalg.qr(vp)
            cosines = np.linalg.svd(u1.T @ u2, compute_uv=False)
            angles = np.arccos(np.clip(cosines, -1, 1))
            assert angles.max() > 1e-3

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(12)
        v = rng.standard_normal((20, 3))
        a = random_subspace_isometry(20, 3, seed=5).map_frame(v)
        b = random_subspace_isometry(20, 3, seed=5).map_frame(v)
        np.testing.assert_array_equal(a, b)

    def test_rank_deficient_warns_and_preserves_gram(self):
        rng = np.random.default_rng(13)
        col = rng.standard_normal(25)
        v = np.column_stack([col, 2 * col, rng.standard_normal(25)])
        iso = random_subspace_isometry(25, 3, seed=2)
        with pytest.warns(UserWarning, match="rank-deficient"):
            vp = iso.map_frame(v)
        g = v.T @ v
        assert np.linalg.norm(vp.T @ vp - g) <= 1e-6 * np.linalg.norm(g)

    def test_k_exceeding_n_rejected(self):
        with pytest.raises(ShapeError):
            random_subspace_isometry(3, 5, seed=0)


class TestRandomMatrixExpectations:
    def test_residual_coefficient_closed_form(self):
        val = mp_residual_coefficient()
        assert val == pytest.approx(MP_CLOSED_FORM, abs=1e-6)
        assert val == pytest.approx(0.36849, abs=5e-4)
        assert round(val, 2) == 0.37

    def test_weight_coefficient_quarter(self):
        assert mp_weight_coefficient() == pytest.approx(0.25, abs=1e-6)

    def test_monte_carlo_matches_paper_ranges(self):
        res, plain = mc_residual_stable_rank(512, 30, seed=1)
        assert 0.35 <= res <= 0.39
        assert 0.23 <= plain <= 0.27

    def test_monte_carlo_deterministic(self):
        assert mc_residual_stable_rank(128, 10, seed=9) == mc_residual_stable_rank(
            128, 10, seed=9
        )

    def test_monte_carlo_converges_with_n(self):
        coeff = mp_residual_coefficient()
        devs = [abs(mc_residual_stable_rank(n, 12, seed=0)[0] - coeff) for n in (64, 256, 1024)]
        assert devs[0] > devs[1] > devs[2]

    def test_preconditions(self):
        with pytest.raises(ValueError):
            mc_residual_stable_rank(32, 10, seed=0)
        with pytest.raises(ValueError):
            mc_residual_stable_rank(64, 5, seed=0)
