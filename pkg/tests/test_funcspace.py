import numpy as np
import pytest
from pytest import approx

from besovkit.funcspace import (AdmissibilityError, SpaceParams, besov_norm, change_of_basis, default_corpus,
                                equivalence_ratio, gramian, gramian_decay_check, inverse_change_of_basis,
                                l2_embedding_constant)
from besovkit.geometry import PatchFunction, gauss_legendre_cube
from besovkit.seq import BesovParams, CoeffSequence, lp_norm, quasi_norm
from besovkit.wavelet import WaveletSystem, analyze, build_univariate, synthesize


def system(D, Dt, name="interval", J=4):
    return WaveletSystem(build_univariate(D, Dt), name, J)


def random_coeffs(sys, seed=0):
    rng = np.random.default_rng(seed)
    return CoeffSequence(sys.grid, [rng.standard_normal(n) for n in sys.grid.sizes])


class TestBesovNorm:
    def test_single_wavelet(self):
        sys = system(2, 2, "square2", 4)
        for j in (1, 2, 3):
            u = synthesize(CoeffSequence.delta(sys.grid, j, 3), sys)
            val = besov_norm(u, SpaceParams(sys, BesovParams(1.0, 2, 2, 2)))
            assert val == approx(2.0 ** j, rel=1e-8)

    @pytest.mark.parametrize("prm", [(0.0, 2, 2), (0.6, 1, 1), (0.2, 2, 1), (0.0, 2, 1)])
    def test_constant_haar(self, prm):
        sys = system(1, 1, "interval", 6)
        a = analyze(PatchFunction.constant(sys.dec), sys)
        val = besov_norm(PatchFunction.constant(sys.dec), SpaceParams(sys, BesovParams(*prm, 1)))
        assert val == approx(abs(a.levels[0][0]))
        assert np.count_nonzero(np.abs(a.flat()) > 1e-14) == 1

    def test_sine_truncation_converges(self):
        # alpha below the Haar threshold 1/2: the level tail is geometric
        sys = system(1, 1, "interval", 8)
        u = PatchFunction(sys.dec, [lambda x: np.sin(2 * np.pi * x[:, 0])])
        sp_ = SpaceParams(sys, BesovParams(0.3, 2, 2, 1))
        assert besov_norm(u, sp_, 6) == approx(besov_norm(u, sp_, 8), rel=0.01)

    def test_sine_outside_haar_range_grows(self):
        # at alpha = 1 every level contributes the same amount: ||u||^2 grows linearly in J
        sys = system(1, 1, "interval", 8)
        u = PatchFunction(sys.dec, [lambda x: np.sin(2 * np.pi * x[:, 0])])
        sp_ = SpaceParams(sys, BesovParams(1.0, 2, 2, 1))
        n6, n8 = besov_norm(u, sp_, 6), besov_norm(u, sp_, 8)
        assert n8 / n6 > 1.1

    def test_sequence_input(self):
        sys = system(2, 2, "interval", 5)
        a = random_coeffs(sys)
        prm = BesovParams(0.5, 2, 2, 1)
        assert besov_norm(a, SpaceParams(sys, prm)) == approx(quasi_norm(a, prm))
        assert besov_norm(a, SpaceParams(sys, prm), 3) < besov_norm(a, SpaceParams(sys, prm))

    def test_inadmissible(self):
        sys = system(1, 1, "interval", 3)
        with pytest.raises(AdmissibilityError):
            besov_norm(PatchFunction.constant(sys.dec), SpaceParams(sys, BesovParams(0.0, 1, 1, 1)))
        with pytest.raises(AdmissibilityError):
            besov_norm(PatchFunction.constant(sys.dec), SpaceParams(sys, BesovParams(0.0, 2, 2, 2)))


class TestGramian:
    @pytest.mark.parametrize("D,Dt,name", [(1, 1, "interval"), (2, 2, "interval"), (2, 4, "square2"),
                                           (3, 3, "cube-surface")])
    def test_self_is_identity(self, D, Dt, name):
        sys = system(D, Dt, name, 3)
        G = gramian(sys, sys).to_dense()
        assert np.max(np.abs(G - np.eye(len(G)))) < 1e-8

    def test_haar_vs_linear_quadrature_oracle(self):
        psi, phi = system(1, 1, "interval", 3), system(2, 2, "interval", 3)
        G = gramian(psi, phi).to_dense()
        # oracle: Phi-analysis of each synthesized Haar function by Gauss-Legendre on fine cells
        nodes, w = gauss_legendre_cube(1, 8, cells=64)
        cols = []
        for j in range(4):
            for i in range(psi.grid.sizes[j]):
                f = synthesize(CoeffSequence.delta(psi.grid, j, i), psi)
                cols.append(analyze(PatchFunction(f.dec, [lambda x, f=f: f.on_patch(0, x)]), phi, P=4).flat())
        assert np.max(np.abs(G - np.array(cols).T)) < 1e-10
        # banded: entries outside overlapping supports vanish exactly
        assert np.count_nonzero(G) < G.size

    def test_disjoint_supports_exact_zero(self):
        psi, phi = system(1, 1, "interval", 6), system(2, 2, "interval", 6)
        G = gramian(psi, phi)
        B = G.block(6, 6).toarray()
        # Haar psi_{6,0} lives on [0, 1/64); the (2,2) dual psi~_{6,32} lives near 1/2
        assert B[32, 0] == 0.0
        assert np.count_nonzero(B[:, 0]) <= 8

    def test_different_patches_are_orthogonal(self):
        psi, phi = system(1, 1, "square2", 2), system(2, 2, "square2", 2)
        G = gramian(psi, phi)
        for (j, k), B in G.blocks.items():
            rows = G.row_grid.levels[j].patch
            cols = G.col_grid.levels[k].patch
            r, c = B.nonzero()
            assert np.all(rows[r] == cols[c])

    def test_decomposition_mismatch(self):
        with pytest.raises(ValueError):
            gramian(system(1, 1, "interval", 2), system(1, 1, "square2", 2))


class TestDecay:
    def test_identity_vacuous(self):
        sys = system(2, 2, "interval", 4)
        r = gramian_decay_check(gramian(sys, sys), sys, sys, 0.3)
        assert r.ok and r.offsets == []

    def test_haar_to_linear(self):
        psi, phi = system(1, 1, "interval", 6), system(2, 2, "interval", 6)
        r = gramian_decay_check(gramian(psi, phi), psi, phi, 0.0)
        assert r.slope_up <= -0.5

    def test_linear_to_haar(self):
        psi, phi = system(2, 2, "interval", 6), system(1, 1, "interval", 6)
        r = gramian_decay_check(gramian(psi, phi), psi, phi, 0.3)
        assert r.slope_up == approx(-1.5, abs=1e-6)
        assert r.ok

    def test_alpha_too_large(self):
        psi, phi = system(2, 2, "interval", 6), system(1, 1, "interval", 6)
        assert not gramian_decay_check(gramian(psi, phi), psi, phi, 1.0).ok


class TestChangeOfBasis:
    def test_identity(self):
        sys = system(2, 2, "interval", 4)
        a = random_coeffs(sys)
        assert change_of_basis(a, gramian(sys, sys)).allclose(a, atol=1e-10)

    def test_zero(self):
        psi, phi = system(1, 1, "interval", 4), system(2, 2, "interval", 4)
        z = change_of_basis(CoeffSequence.zeros(psi.grid), gramian(psi, phi))
        assert np.all(z.flat() == 0)

    @pytest.mark.parametrize("name", ["interval", "square2"])
    def test_matches_direct_analysis(self, name):
        # u is a linear spline, so both analyses are exact
        psi, phi = system(2, 2, name, 3), system(2, 4, name, 3)
        a = random_coeffs(psi, 3)
        u = synthesize(a, psi)
        b = change_of_basis(a, gramian(psi, phi))
        assert b.allclose(analyze(u, phi), atol=1e-6)

    def test_haar_input(self):
        psi, phi = system(1, 1, "interval", 4), system(2, 2, "interval", 4)
        a = random_coeffs(psi, 4)
        u = synthesize(a, psi)
        plain = PatchFunction(u.dec, [lambda x: u.on_patch(0, x)])
        assert change_of_basis(a, gramian(psi, phi)).allclose(analyze(plain, phi, P=4), atol=1e-6)

    def test_smooth_function_is_close(self):
        psi, phi = system(2, 2, "interval", 6), system(2, 4, "interval", 6)
        u = PatchFunction(psi.dec, [lambda x: np.sin(2 * np.pi * x[:, 0])])
        b = change_of_basis(analyze(u, psi), gramian(psi, phi))
        assert np.max(np.abs(b.flat() - analyze(u, phi).flat())) < 1e-2

    def test_inverse(self):
        psi, phi = system(2, 2, "interval", 4), system(2, 4, "interval", 4)
        G = gramian(psi, phi)
        a = random_coeffs(psi, 5)
        assert inverse_change_of_basis(change_of_basis(a, G), G).allclose(a, atol=1e-6)


class TestEquivalence:
    def test_self_ratio_one(self):
        sys = system(2, 2, "interval", 5)
        r = equivalence_ratio(default_corpus(sys.dec), sys, sys, BesovParams(0.3, 2, 2, 1), range(3, 6))
        assert r.min_ratio == approx(1.0) and r.max_ratio == approx(1.0)

    def test_corpus_size(self):
        assert len(default_corpus(system(1, 1, "cube-surface", 1).dec)) == 10

    def test_band_haar_vs_linear(self):
        psi, phi = system(1, 1, "interval", 6), system(2, 2, "interval", 6)
        r = equivalence_ratio(default_corpus(psi.dec), psi, phi, BesovParams(0.3, 2, 2, 1), range(4, 7))
        assert 0 < r.min_ratio <= r.max_ratio < 3
        assert set(r.per_J) == {4, 5, 6}

    def test_inadmissible(self):
        sys = system(1, 1, "interval", 3)
        with pytest.raises(AdmissibilityError):
            equivalence_ratio(default_corpus(sys.dec), sys, sys, BesovParams(-0.5, 2, 2, 1))


class TestL2Embedding:
    @pytest.mark.parametrize("prm", [(0.0, 2, 2), (1.0, 1, 1), (0.3, 2, 4), (0.2, 4, 2), (3.0, 0.5, 0.5),
                                     (0.1, 3, 3)])
    def test_lower_bound(self, prm):
        sys = system(1, 1, "cube-surface", 4)
        p = BesovParams(*prm, 2)
        c = l2_embedding_constant(p, sys.grid)
        assert c > 0
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = CoeffSequence(sys.grid, [rng.standard_normal(n) * rng.uniform(0, 1) ** 4 for n in sys.grid.sizes])
            assert quasi_norm(a, p) >= c * lp_norm(a, 2) * (1 - 1e-12)

    def test_inadmissible_zero(self):
        assert l2_embedding_constant(BesovParams(0.0, 1, 1, 1), system(1, 1, "interval", 3).grid) == 0.0
