import math

import numpy as np
import pytest
import scipy.sparse as sp
from pytest import approx

from besovkit.admat import (
    AdParams,
    ScaleMatrix,
    ad_fit_epsilon,
    ad_membership,
    apply,
    apply_split,
    diagonal_scaling,
    empirical_operator_norm,
    omega,
    omega_block,
    random_ad_matrix,
    schur_bound,
)
from besovkit.grid import IndexPoint, build_dyadic_grid
from besovkit.seq import BesovParams, CoeffSequence, quasi_norm, random_sequence


def _omega_matrix(grid, prm):
    return ScaleMatrix(grid, grid, {(j, k): omega_block(grid, grid, j, k, prm)
                                    for j in range(grid.J + 1) for k in range(grid.J + 1)})


class TestOmega:
    def test_diagonal(self):
        x = IndexPoint(3, (0.25,), 0)
        assert omega(3, x, 3, x, AdParams(0.7, 0.7, 0.5, 0.25)) == approx(1.0)

    def test_level_offset(self):
        x = IndexPoint(0, (0.5,), 0)
        assert omega(1, x, 0, x, AdParams(0, 0, 2, 0.5)) == approx(0.5)

    def test_spatial_decay(self):
        a, b = IndexPoint(0, (0.0,), 0), IndexPoint(0, (1.0,), 0)
        assert omega(0, a, 0, b, AdParams(0, 0, 2, 0.5)) == approx(2 ** -1.5)
        assert omega(0, a, 0, b, AdParams(0, 0, 2, 0.5)) == approx(0.353553, abs=1e-6)

    def test_alpha_weights(self):
        x = IndexPoint(0, (0.5,), 0)
        prm = AdParams(1.0, 0.0, 2, 0.5)
        assert omega(2, x, 2, x, prm) == approx(4.0)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            AdParams(0, 0, 2, 0.0)


class TestMembership:
    def test_identity(self):
        g = build_dyadic_grid(1, 4)
        assert ad_membership(ScaleMatrix.identity(g), AdParams(0, 0, 2, 0.5)).sup_ratio == approx(1.0)

    def test_omega_matrix(self):
        g = build_dyadic_grid(1, 4)
        prm = AdParams(0, 0, 2, 0.5)
        M = _omega_matrix(g, prm)
        assert ad_membership(M, prm).sup_ratio == approx(1.0)
        r = ad_membership(M, prm.with_epsilon(0.75))
        assert r.sup_ratio > 1
        (j, xi), (k, eta) = r.witness
        assert (j, xi) != (k, eta)

    def test_zero(self):
        g = build_dyadic_grid(1, 3)
        r = ad_membership(ScaleMatrix(g, g), AdParams(0, 0, 2, 0.5))
        assert r.sup_ratio == 0 and r.witness is None

    def test_dimension_mismatch(self):
        g = build_dyadic_grid(1, 2)
        with pytest.raises(ValueError):
            ad_membership(ScaleMatrix.identity(g), AdParams(0, 0, 2, 0.5, d=2))


class TestFitEpsilon:
    def test_identity(self):
        g = build_dyadic_grid(1, 3)
        assert ad_fit_epsilon(ScaleMatrix.identity(g), 0, 0, 2, eps_max=4.0) == 4.0

    def test_omega_matrix(self):
        g = build_dyadic_grid(1, 4)
        M = _omega_matrix(g, AdParams(0, 0, 2, 0.5))
        assert ad_fit_epsilon(M, 0, 0, 2) == approx(0.5, abs=1e-3)

    def test_one_large_entry(self):
        g = build_dyadic_grid(1, 4)
        prm = AdParams(0, 0, 2, 0.5)
        M = _omega_matrix(g, prm)
        B = M.block(3, 0).toarray()
        B[0, 0] *= 2  # rows and columns both at position 0, distance 0
        M[3, 0] = B
        eps = ad_fit_epsilon(M, 0, 0, 2)
        # 2 * 2^{3(eps - 1/2)} <= 1
        assert eps == approx(0.5 - 1 / 3, abs=1e-3)
        assert eps < 0.5


class TestApply:
    def test_identity(self):
        g = build_dyadic_grid(1, 4)
        a = random_sequence(g, np.random.default_rng(0))
        assert apply(ScaleMatrix.identity(g), a).allclose(a, atol=0)

    def test_diagonal_scaling(self):
        g = build_dyadic_grid(2, 3)
        a = random_sequence(g, np.random.default_rng(1))
        b = apply(diagonal_scaling(g, 0.7), a)
        prm = BesovParams(0.2, 1.5, 0.8, 2)
        assert quasi_norm(b, prm) == approx(quasi_norm(a, prm.with_alpha(0.9)), rel=1e-12)

    def test_rank_one_block(self):
        g = build_dyadic_grid(1, 0)
        M = ScaleMatrix(g, g, {(0, 0): np.outer([1.0, 2.0], [3.0, -1.0])})
        a = CoeffSequence(g, [np.array([1.0, 4.0])])
        assert np.allclose(apply(M, a).levels[0], [-1.0, -2.0])

    def test_linearity(self):
        g = build_dyadic_grid(1, 5)
        M = random_ad_matrix(g, g, AdParams(0, 0, 1, 0.5), seed=2)
        rng = np.random.default_rng(2)
        a, b = random_sequence(g, rng), random_sequence(g, rng)
        lam = 0.3 - 1.2j
        lhs = apply(M, a * lam + b)
        rhs = apply(M, a) * lam + apply(M, b)
        assert lhs.allclose(rhs, atol=1e-12)

    def test_column_grid_checked(self):
        g, h = build_dyadic_grid(1, 2), build_dyadic_grid(1, 3)
        with pytest.raises(ValueError):
            apply(ScaleMatrix.identity(g), CoeffSequence.zeros(h))


class TestSplit:
    def test_diagonal(self):
        g = build_dyadic_grid(1, 3)
        a = random_sequence(g, np.random.default_rng(3))
        minus, plus = apply_split(diagonal_scaling(g, 1.0), a)
        assert minus.nnz == 0
        assert plus.allclose(apply(diagonal_scaling(g, 1.0), a), atol=0)

    def test_strictly_lower(self):
        g = build_dyadic_grid(1, 2)
        M = ScaleMatrix(g, g, {(2, 0): np.ones((5, 2)), (1, 0): np.ones((3, 2))})
        a = random_sequence(g, np.random.default_rng(4))
        minus, plus = apply_split(M, a)
        assert plus.nnz == 0
        assert minus.allclose(apply(M, a), atol=0)

    def test_parts_sum_exactly(self):
        g = build_dyadic_grid(1, 1)
        M = ScaleMatrix(g, g, {(1, 0): np.ones((3, 2)), (0, 1): np.ones((2, 3)), (1, 1): 2 * np.eye(3)})
        a = CoeffSequence(g, [np.array([1.0, 2.0]), np.array([1.0, 0.0, -1.0])])
        minus, plus = apply_split(M, a)
        assert np.allclose(minus.levels[1], [3.0, 3.0, 3.0])
        assert np.allclose(plus.levels[1], [2.0, 0.0, -2.0])
        assert np.allclose(plus.levels[0], [0.0, 0.0])
        total = apply(M, a)
        assert all(np.array_equal(t, m + p) for t, m, p in zip(total.levels, minus.levels, plus.levels))


class TestSchur:
    @pytest.mark.parametrize("p", [1, 2, math.inf])
    def test_identity(self, p):
        assert schur_bound(np.eye(7), p) == approx(1.0)

    def test_all_ones(self):
        n = 9
        K = np.ones((n, n))
        assert schur_bound(K, 2) == approx(n)
        assert np.linalg.norm(K, 2) == approx(n)

    def test_sparse_input(self):
        K = sp.random(20, 30, density=0.2, random_state=0)
        assert schur_bound(K, 2) == approx(schur_bound(K.toarray(), 2))

    def test_rejects_small_p(self):
        with pytest.raises(ValueError):
            schur_bound(np.eye(2), 0.5)

    @pytest.mark.parametrize("p", [1, 2, math.inf])
    def test_exact_for_p_one_and_inf(self, p):
        K = np.random.default_rng(6).random((12, 8))
        ordp = {1: 1, 2: 2, math.inf: np.inf}[p]
        true = np.linalg.norm(K, ordp)
        assert true <= schur_bound(K, p) * (1 + 1e-12)
        if p != 2:
            assert true == approx(schur_bound(K, p))

    @pytest.mark.parametrize("p", [1.0, 2.0, 4.0])
    def test_layer_kernel_growth(self, p):
        # K^-_{j,k,eps}(xi, eta) = [1 + 2^k dist]^{-(d+eps)}, bound C' 2^{(j-k)(d+eps)/p}
        eps, d = 0.5, 1
        g = build_dyadic_grid(d, 7)
        ratios = {}
        for j in range(8):
            for k in range(j):
                dist = np.abs(g.levels[j].points[:, :1] - g.levels[k].points[:, 0][None, :])
                K = (1.0 + 2.0 ** k * dist) ** -(d + eps)
                ratios[(j, k)] = schur_bound(K, p) / 2.0 ** ((j - k) * (d + eps) / p)
        c6 = max(v for (j, k), v in ratios.items() if j <= 6)
        c7 = max(ratios.values())
        assert c7 <= 1.1 * c6


class TestEmpiricalNorm:
    def test_identity(self):
        g = build_dyadic_grid(1, 4)
        prm = BesovParams(0.5, 1, 2)
        assert empirical_operator_norm(ScaleMatrix.identity(g), prm, prm) >= 1 - 1e-12

    def test_zero(self):
        g = build_dyadic_grid(1, 3)
        prm = BesovParams(0, 2, 2)
        assert empirical_operator_norm(ScaleMatrix(g, g), prm, prm) == 0

    def test_lower_bound_of_l2_norm(self):
        g = build_dyadic_grid(1, 4)
        M = random_ad_matrix(g, g, AdParams(0, 0, 2, 1.0), seed=3)
        prm = BesovParams(0, 2, 2)
        est = empirical_operator_norm(M, prm, prm)
        assert est <= np.linalg.norm(M.to_dense(), 2) * (1 + 1e-10)
        assert est == approx(np.linalg.norm(M.to_dense(), 2), rel=1e-8)

    def test_schur_dominates(self):
        g = build_dyadic_grid(1, 4)
        rng = np.random.default_rng(8)
        for p in (1.0, 2.0):
            prm = BesovParams(0, p, p)
            for seed in range(5):
                A = np.abs(random_ad_matrix(g, g, AdParams(0, 0, p, 0.5), seed=seed).to_dense().real)
                A *= rng.random(A.shape)
                M = ScaleMatrix.from_dense(g, g, A)
                # with alpha = 0 the level weights 2^{j(1/2-1/p)} conjugate the kernel
                w = np.concatenate([np.full(n, 2.0 ** (j * (0.5 - 1 / p))) for j, n in enumerate(g.sizes)])
                est = empirical_operator_norm(M, prm, prm, trials=50)
                assert est <= schur_bound(w[:, None] * A / w[None, :], p) * (1 + 1e-10)


class TestMonotonicity:
    def test_sup_ratio_in_p(self):
        g = build_dyadic_grid(1, 4)
        M = random_ad_matrix(g, g, AdParams(0, 0, 0.5, 0.5), seed=5)
        vals = [ad_membership(M, AdParams(0, 0, p, 0.5)).sup_ratio for p in (4, 2, 1, 2 / 3, 1 / 2)]
        assert vals[0] == approx(vals[1]) and vals[1] == approx(vals[2])
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
