"""Biorthogonal B-spline wavelets, periodized per patch and lifted to decompositions.

The univariate systems are the compactly supported spline families with a
primal cardinal B-spline of order ``D`` and a dual scaling function of
polynomial exactness ``D_dual``.  With ``phi(x) = sqrt(2) sum_k h_k phi(2x - k)``
the wavelets use ``g_k = (-1)^k ht_{1-k}`` and ``gt_k = (-1)^k h_{1-k}``.

On each patch the system is periodized on ``[0,1]`` and tensorized.  Grid
level 0 carries all ``2^d`` resolution-0 functions (tag ``e = 0`` is the
scaling function); level ``j >= 1`` carries the resolution-``j`` wavelets with
tags ``e`` in ``{0,1}^d \\ {0}``.  Inner products are evaluated exactly from
refinable cross-correlations, so Gramians are exact up to rounding and vanish
identically for disjoint supports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline

from .geometry import Decomposition, PatchFunction, builtin_manifolds
from .grid import GridLevel, MultiscaleGrid, _patch_constants
from .seq import CoeffSequence

__all__ = [
    "Filter",
    "bspline_masks",
    "refinable_correlation",
    "cell_moments",
    "refinable_moments",
    "sobolev_exponent",
    "GAMMA_DUAL",
    "UnivariateSystem",
    "build_univariate",
    "WaveletSystem",
    "SplineFunction",
    "cell_samples",
    "parse_basis",
    "analyze",
    "synthesize",
    "moments_check",
    "support_check",
    "normalization_check",
    "coefficient_decay_check",
    "riesz_bounds",
]

# Sobolev regularity of the dual scaling function, from the spectral radius
# of the transition operator of the dual mask (see sobolev_exponent).
GAMMA_DUAL = {
    (1, 1): 0.5,
    (1, 3): 1.440765,
    (1, 5): 2.175132,
    (2, 2): 0.440765,
    (2, 4): 1.175132,
    (2, 6): 1.793134,
    (3, 3): 0.175132,
    (3, 5): 0.793134,
    (3, 7): 1.344084,
    (4, 6): 0.344084,
    (4, 8): 0.862020,
}


class WaveletError(ValueError):
    """Invalid wavelet parameters or inputs."""


# ---------------------------------------------------------------------------
# filters and refinable functions


@dataclass(frozen=True, eq=False)
class Filter:
    """Finite Laurent sequence ``c_k`` for ``k = start .. start + len - 1``."""

    coeffs: np.ndarray
    start: int

    @property
    def end(self) -> int:
        return self.start + len(self.coeffs) - 1

    def get(self, k: int) -> float:
        i = k - self.start
        return float(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0.0

    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    def key(self) -> tuple:
        return (self.start, tuple(np.round(self.coeffs, 15)))

    def scaled(self, c: float) -> "Filter":
        return Filter(c * self.coeffs, self.start)


def _conv(a: Filter, b: Filter) -> Filter:
    return Filter(np.convolve(a.coeffs, b.coeffs), a.start + b.start)


def bspline_masks(D: int, D_dual: int) -> tuple[Filter, Filter]:
    """Primal B-spline mask ``h`` and dual mask ``ht`` with ``sum h_k ht_{k+2m} = delta_m``."""
    h = Filter(math.sqrt(2) * 2.0 ** -D * np.array([math.comb(D, k) for k in range(D + 1)], float), -(D // 2))
    ht = Filter(math.sqrt(2) * 2.0 ** -D_dual * np.array([math.comb(D_dual, k) for k in range(D_dual + 1)], float),
                -(D_dual // 2))
    K = (D + D_dual) // 2
    base = Filter(np.array([-0.25, 0.5, -0.25]), -1)
    P = np.zeros(2 * K - 1)
    term = Filter(np.array([1.0]), 0)
    for n in range(K):
        off = term.start + (K - 1)
        P[off:off + len(term.coeffs)] += math.comb(K - 1 + n, n) * term.coeffs
        term = _conv(term, base)
    return h, _conv(ht, Filter(P, -(K - 1)))


def highpass(lowpass_other: Filter) -> Filter:
    """``g_k = (-1)^k a_{1-k}``."""
    ks = np.arange(1 - lowpass_other.end, 1 - lowpass_other.start + 1)
    return Filter(np.array([(-1.0) ** int(k) * lowpass_other.get(1 - k) for k in ks]), int(ks[0]))


@lru_cache(maxsize=None)
def _correlation_cached(ka, kb) -> tuple[int, tuple]:
    a = Filter(np.array(ka[1]), ka[0])
    b = Filter(np.array(kb[1]), kb[0])
    lo, hi = a.start - b.end + 1, a.end - b.start - 1
    ms = np.arange(lo, hi + 1)
    n = len(ms)
    T = np.zeros((n, n))
    for i, m in enumerate(ms):
        for k in a.indices():
            for jj, r in enumerate(ms):
                T[i, jj] += a.get(int(k)) * b.get(int(r - 2 * m + k))
    A = np.vstack([T - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    c, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.max(np.abs(T @ c - c)) > 1e-10:
        raise WaveletError("cross-correlation of refinable functions is not well defined")
    return int(lo), tuple(c)


def refinable_correlation(a: Filter, b: Filter) -> Filter:
    """``c_m = int A(x) B(x - m) dx`` for refinable ``A``, ``B`` with masks ``a``, ``b``.

    Solves the refinement relation ``c_m = sum_{k,l} a_k b_l c_{2m+l-k}``
    normalized by ``sum_m c_m = 1``.
    """
    lo, c = _correlation_cached(a.key(), b.key())
    return Filter(np.array(c), lo)


@lru_cache(maxsize=None)
def _cell_moments_cached(kb, P: int) -> tuple[int, np.ndarray]:
    b = Filter(np.array(kb[1]), kb[0])
    lo, hi = -b.end + 1, -b.start
    ns = np.arange(lo, hi + 1)
    n = len(ns)
    A = np.zeros((n, n))      # e_n <- (sqrt2/2) sum_k b_k [e_{2n+k} + e_{2n+k-1}]
    Ashift = np.zeros((n, n))  # the e_{2n+k-1} part alone
    for i, nn in enumerate(ns):
        for k in b.indices():
            for target, mat_list in ((2 * nn + k, (A,)), (2 * nn + k - 1, (A, Ashift))):
                t = target - lo
                if 0 <= t < n:
                    for M in mat_list:
                        M[i, t] += math.sqrt(2) / 2 * b.get(int(k))
    E = np.zeros((P + 1, n))
    sysm = np.vstack([A - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    E[0] = np.linalg.lstsq(sysm, rhs, rcond=None)[0]
    for p in range(1, P + 1):
        r = sum(math.comb(p, i) * (Ashift @ E[i]) for i in range(p))
        E[p] = np.linalg.solve(np.eye(n) - 2.0 ** -p * A, 2.0 ** -p * r)
    return int(lo), E


def cell_moments(b: Filter, P: int) -> tuple[int, np.ndarray]:
    """``e[p, n - lo] = int_0^1 t^p B(t - n) dt`` for ``p <= P`` and the offset ``lo``."""
    return _cell_moments_cached(b.key(), P)


def refinable_moments(b: Filter, P: int) -> np.ndarray:
    """``M_p = int x^p B(x) dx`` from ``M_p (1 - 2^-p) = (sqrt2/2) 2^-p sum_k b_k sum_{i<p} C(p,i) k^{p-i} M_i``."""
    M = np.zeros(P + 1)
    M[0] = 1.0
    for p in range(1, P + 1):
        s = sum(b.get(int(k)) * sum(math.comb(p, i) * float(k) ** (p - i) * M[i] for i in range(p))
                for k in b.indices())
        M[p] = math.sqrt(2) / 2 * 2.0 ** -p * s / (1.0 - 2.0 ** -p)
    return M


def function_moments(filt: Filter, phi_moments: np.ndarray, P: int) -> np.ndarray:
    """Moments ``int x^p f(x) dx`` of ``f = sqrt2 sum_k c_k phi(2x - k)``."""
    out = np.zeros(P + 1)
    for p in range(P + 1):
        s = sum(filt.get(int(k)) * sum(math.comb(p, i) * float(k) ** (p - i) * phi_moments[i] for i in range(p + 1))
                for k in filt.indices())
        out[p] = math.sqrt(2) / 2 * 2.0 ** -p * s
    return out


def sobolev_exponent(mask: Filter, order: int) -> float:
    """``L_2``-Sobolev exponent of the refinable function of ``mask``.

    Factors ``m(z) = ((1+z)/2)^order L(z)`` with ``m = mask / sqrt2`` and
    returns ``order - log2(rho)/2``, where ``rho`` is the spectral radius of the
    transition operator of ``|L|^2``.
    """
    L = mask.coeffs / math.sqrt(2)
    for _ in range(order):
        q = np.zeros(len(L) - 1)
        r = L.copy()
        for i in range(len(L) - 1):
            q[i] = 2 * r[i]
            r[i] -= q[i] / 2
            r[i + 1] -= q[i] / 2
        if abs(r[-1]) > 1e-9:
            raise WaveletError("mask lacks the requested (1+z) factors")
        L = q
    W = np.convolve(L, L[::-1])
    M = len(L) - 1
    idx = np.arange(-M, M + 1)
    T = np.zeros((len(idx), len(idx)))
    for a, m in enumerate(idx):
        for b, n in enumerate(idx):
            k = 2 * m - n
            if -M <= k <= M:
                T[a, b] = 2 * W[k + M]
    rho = float(np.max(np.abs(np.linalg.eigvals(T))))
    return order - 0.5 * math.log2(rho)


def periodic_refinement(filt: Filter, r: int) -> np.ndarray:
    """``P[l, k] = sum_{m = l - 2k mod 2^{r+1}} c_m``, shape ``(2^{r+1}, 2^r)``."""
    N = 2 ** (r + 1)
    P = np.zeros((N, 2 ** r))
    for k in range(2 ** r):
        for m in filt.indices():
            P[(2 * k + m) % N, k] += filt.get(int(m))
    return P


def periodic_correlation_matrix(c: Filter, L: int) -> np.ndarray:
    """``C[a, b] = sum_n c_{b - a + n 2^L}`` (Gram matrix of level-``L`` periodized translates)."""
    N = 2 ** L
    row = np.zeros(N)
    for m in c.indices():
        row[m % N] += c.get(int(m))
    idx = (np.arange(N)[None, :] - np.arange(N)[:, None]) % N
    return row[idx]


# ---------------------------------------------------------------------------
# univariate systems


@dataclass(frozen=True, eq=False)
class UnivariateSystem:
    """Biorthogonal spline system of primal order ``D`` and dual exactness ``D_dual``."""

    D: int
    D_dual: int
    h: Filter
    ht: Filter
    g: Filter
    gt: Filter
    gamma: float
    gamma_dual: float
    boundary_mode: str = "periodic"

    @property
    def label(self) -> str:
        return f"spline:D={self.D},Dt={self.D_dual},mode={self.boundary_mode}"

    # supports (in units of the level spacing)
    @property
    def phi_support(self) -> tuple[float, float]:
        return float(self.h.start), float(self.h.end)

    @property
    def phi_dual_support(self) -> tuple[float, float]:
        return float(self.ht.start), float(self.ht.end)

    @property
    def psi_support(self) -> tuple[float, float]:
        return (self.g.start + self.h.start) / 2, (self.g.end + self.h.end) / 2

    @property
    def psi_dual_support(self) -> tuple[float, float]:
        return (self.gt.start + self.ht.start) / 2, (self.gt.end + self.ht.end) / 2

    def support(self, wavelet: bool, dual: bool) -> tuple[float, float]:
        if wavelet:
            return self.psi_dual_support if dual else self.psi_support
        return self.phi_dual_support if dual else self.phi_support

    def masks(self, dual: bool) -> tuple[Filter, Filter]:
        return (self.ht, self.gt) if dual else (self.h, self.g)

    def biorthogonality_error(self) -> float:
        """Max deviation in the discrete relations for ``(h, ht)``, ``(g, gt)`` and the cross pairs."""
        err = 0.0
        pairs = ((self.h, self.ht, 1.0), (self.g, self.gt, 1.0), (self.h, self.gt, 0.0), (self.g, self.ht, 0.0))
        for a, b, diag in pairs:
            for m in range(-12, 13):
                s = sum(a.get(int(k)) * b.get(int(k) + 2 * m) for k in a.indices())
                err = max(err, abs(s - (diag if m == 0 else 0.0)))
        return err

    @lru_cache(maxsize=None)
    def synthesis_1d(self, L: int, dual: bool) -> tuple:
        """Per resolution ``r <= L``: (scaling, wavelet) columns in the level-``L`` scaling basis.

        Returns a tuple indexed by ``r`` of pairs ``(Phi_r, Psi_r)`` of shapes
        ``(2^L, 2^r)``; ``Psi_L`` is ``None``.
        """
        lo, hi = self.masks(dual)
        out = [None] * (L + 1)
        Phi = np.eye(2 ** L)
        out[L] = (Phi, None)
        for r in range(L - 1, -1, -1):
            Pr = periodic_refinement(lo, r)
            Qr = periodic_refinement(hi, r)
            Phi_next = out[r + 1][0]
            out[r] = (Phi_next @ Pr, Phi_next @ Qr)
        return tuple(out)

    def correlation(self, other: "UnivariateSystem", dual_self: bool, dual_other: bool) -> Filter:
        a = self.ht if dual_self else self.h
        b = other.ht if dual_other else other.h
        return refinable_correlation(a, b)

    def real_line_norms(self) -> dict:
        """``L_2(R)`` norms of ``phi, psi, phi~, psi~``."""
        out = {}
        for dual in (False, True):
            lo, hi = self.masks(dual)
            c = refinable_correlation(lo, lo)
            out[("phi", dual)] = math.sqrt(c.get(0))
            s = 0.0
            for k in hi.indices():
                for l in hi.indices():
                    s += hi.get(int(k)) * hi.get(int(l)) * c.get(int(l - k))
            out[("psi", dual)] = math.sqrt(s)
        return out


def build_univariate(D: int, D_dual: int) -> UnivariateSystem:
    """Spline system with primal order ``D`` and dual order ``D_dual >= D``, ``D + D_dual`` even."""
    if D < 1 or D_dual < D:
        raise WaveletError("need D >= 1 and D_dual >= D")
    if (D + D_dual) % 2:
        raise WaveletError("D + D_dual must be even")
    if (D, D_dual) not in GAMMA_DUAL:
        raise WaveletError(f"(D, D_dual)=({D}, {D_dual}) is not in the catalog {sorted(GAMMA_DUAL)}")
    h, ht = bspline_masks(D, D_dual)
    g, gt = highpass(ht), highpass(h)
    return UnivariateSystem(D, D_dual, h, ht, g, gt, D - 0.5, GAMMA_DUAL[(D, D_dual)])


def parse_basis(text: str) -> UnivariateSystem:
    """Parse ``spline:D=2,Dt=4,mode=periodic``."""
    kind, _, rest = text.partition(":")
    if kind.strip() != "spline":
        raise WaveletError(f"unknown basis family {kind!r}")
    opts = {}
    for part in filter(None, rest.split(",")):
        key, _, val = part.partition("=")
        opts[key.strip()] = val.strip()
    if opts.get("mode", "periodic") != "periodic":
        raise WaveletError("only mode=periodic is available")
    try:
        D = int(opts["D"])
        Dt = int(opts.get("Dt", opts["D"]))
    except (KeyError, ValueError):
        raise WaveletError(f"basis needs integer D and Dt: {text!r}") from None
    return build_univariate(D, Dt)


# ---------------------------------------------------------------------------
# systems on decompositions


def _corners(d: int) -> list[tuple]:
    return list(itertools.product((0, 1), repeat=d))


def _apply_axis(M, arr: np.ndarray, ax: int) -> np.ndarray:
    """Apply the (sparse or dense) matrix ``M`` along axis ``ax`` of ``arr``."""
    X = np.moveaxis(arr, ax, 0)
    shp = X.shape
    Y = M @ X.reshape(shp[0], -1)
    return np.moveaxis(np.asarray(Y).reshape((M.shape[0],) + shp[1:]), 0, ax)


def _kron_all(mats) -> np.ndarray:
    out = mats[0]
    for M in mats[1:]:
        out = np.kron(out, M)
    return out


class WaveletSystem:
    """Patchwise periodized tensor system ``(Psi, Psi~)`` on a decomposition, levels ``0..J``."""

    def __init__(self, univariate: UnivariateSystem, dec: Decomposition | str, J: int, label: str | None = None):
        if isinstance(dec, str):
            dec = builtin_manifolds(dec)
        if J < 0:
            raise WaveletError("J must be nonnegative")
        self.uni = univariate
        self.dec = dec
        self.J = int(J)
        self.d = dec.d
        self.label = label or univariate.label
        corners = _corners(self.d)
        self.tagset = tuple(corners)
        self.level_tags = [corners] + [corners[1:]] * self.J

    @property
    def L(self) -> int:
        return self.J + 1

    def __repr__(self) -> str:
        return f"WaveletSystem({self.label}, {self.dec.name}, J={self.J})"

    # -- layout ---------------------------------------------------------

    def patch_level_size(self, j: int) -> int:
        return len(self.level_tags[j]) * 2 ** (self.d * j)

    @cached_property
    def grid(self) -> MultiscaleGrid:
        levels = []
        d = self.d
        for j in range(self.J + 1):
            n1 = 2 ** j
            ks = np.array(list(itertools.product(range(n1), repeat=d)), dtype=float).reshape(-1, d)
            pts, tags, pid, loc = [], [], [], []
            for p in self.dec.patches:
                for e in self.level_tags[j]:
                    centers = np.array([sum(self.uni.support(bool(ei), False)) / 2 for ei in e])
                    x = np.mod((ks + centers) / n1, 1.0)
                    pts.append(p(x))
                    loc.append(x)
                    tags.append(np.full(len(x), self.tagset.index(e)))
                    pid.append(np.full(len(x), p.id))
            levels.append(GridLevel(np.concatenate(pts), np.concatenate(tags), np.concatenate(pid),
                                    np.concatenate(loc)))
        lip_hi, lip_lo = _patch_constants(self.dec)
        return MultiscaleGrid(levels, self.tagset, d, math.sqrt(d) * lip_hi, 0.25 * lip_lo, 1.0, True, self.dec)

    def index_info(self, j: int) -> dict:
        """Arrays ``patch``, ``e`` (tuples index), ``k`` (multi-index) for the level-``j`` entries."""
        n1 = 2 ** j
        ks = np.array(list(itertools.product(range(n1), repeat=self.d))).reshape(-1, self.d)
        patch, tag, kk = [], [], []
        for p in self.dec.patches:
            for e in self.level_tags[j]:
                patch.append(np.full(len(ks), p.id))
                tag.append(np.full(len(ks), self.tagset.index(e)))
                kk.append(ks)
        return {"patch": np.concatenate(patch), "tag": np.concatenate(tag), "k": np.concatenate(kk)}

    # -- norms and balancing ---------------------------------------------

    @cached_property
    def _gram_1d(self) -> dict:
        L = self.L
        return {dual: periodic_correlation_matrix(self.uni.correlation(self.uni, dual, dual), L)
                for dual in (False, True)}

    @cached_property
    def _norms_1d(self) -> dict:
        """Unbalanced periodized norms per resolution and kind: key ``(r, wavelet, dual)``."""
        out = {}
        for dual in (False, True):
            G = self._gram_1d[dual]
            syn = self.uni.synthesis_1d(self.L, dual)
            for r in range(self.J + 1):
                for wav, M in ((False, syn[r][0]), (True, syn[r][1])):
                    col = M[:, 0]
                    out[(r, wav, dual)] = math.sqrt(float(col @ G @ col))
        return out

    @cached_property
    def scales(self) -> dict:
        """Balancing factor ``s`` per ``(r, e)``: primal functions are multiplied by ``s``, duals divided."""
        out = {}
        for r in range(self.J + 1):
            for e in (self.level_tags[min(r, 1)] if r else self.level_tags[0]):
                prim = math.prod(self._norms_1d[(r, bool(ei), False)] for ei in e)
                dual = math.prod(self._norms_1d[(r, bool(ei), True)] for ei in e)
                out[(r, e)] = 1.0 if r == 0 and not any(e) else math.sqrt(dual / prim)
        return out

    def norms(self, dual: bool = False) -> dict:
        """Balanced ``L_2`` norm of every basis type ``(r, e)`` (translation invariant per patch)."""
        out = {}
        for (r, e), s in self.scales.items():
            base = math.prod(self._norms_1d[(r, bool(ei), dual)] for ei in e)
            out[(r, e)] = base / s if dual else base * s
        return out

    # -- matrices ----------------------------------------------------------

    def patch_matrix(self, dual: bool = False, J: int | None = None) -> np.ndarray:
        """Columns: basis functions of one patch (levels ``0..J``) in the level-``J+1`` scaling basis."""
        J = self.J if J is None else J
        L = J + 1
        syn = self.uni.synthesis_1d(L, dual)
        cols = []
        for j in range(J + 1):
            for e in self.level_tags[j]:
                mats = [syn[j][1] if ei else syn[j][0] for ei in e]
                s = self.scales[(j, e)]
                cols.append(_kron_all(mats) * (1.0 / s if dual else s))
        return np.concatenate(cols, axis=1)

    def patch_offsets(self, J: int | None = None) -> np.ndarray:
        J = self.J if J is None else J
        return np.cumsum([0] + [self.patch_level_size(j) for j in range(J + 1)])

    def to_patch_vectors(self, a: CoeffSequence) -> list[np.ndarray]:
        """Split a sequence into per-patch coefficient vectors (levels concatenated)."""
        J = a.grid.J
        out = []
        for i in range(self.dec.N):
            parts = []
            for j in range(J + 1):
                n = self.patch_level_size(j)
                parts.append(a.levels[j][i * n:(i + 1) * n])
            out.append(np.concatenate(parts))
        return out

    def from_patch_vectors(self, vecs: list[np.ndarray], J: int | None = None) -> CoeffSequence:
        J = self.J if J is None else J
        grid = self.grid if J == self.J else self.grid.truncate(J)
        off = self.patch_offsets(J)
        levels = [np.concatenate([v[off[j]:off[j + 1]] for v in vecs]) for j in range(J + 1)]
        return CoeffSequence(grid, levels)

    # -- fast transforms ---------------------------------------------------

    @lru_cache(maxsize=None)
    def _analysis_ops(self, r: int):
        lo, hi = self.uni.masks(True)
        return (sparse.csr_matrix(periodic_refinement(lo, r).T), sparse.csr_matrix(periodic_refinement(hi, r).T))

    @lru_cache(maxsize=None)
    def _synthesis_ops(self, r: int):
        lo, hi = self.uni.masks(False)
        return sparse.csr_matrix(periodic_refinement(lo, r)), sparse.csr_matrix(periodic_refinement(hi, r))

    def decompose(self, c: np.ndarray, J: int) -> np.ndarray:
        """Dual scaling inner products at level ``Ls`` (array ``(2^Ls,)*d``) -> patch coefficient vector."""
        d = self.d
        Ls = int(round(math.log2(c.shape[0])))
        if Ls < J + 1:
            raise WaveletError("sample level too coarse for the requested J")
        bands = {}
        cur = c
        for r in range(Ls - 1, -1, -1):
            A0, A1 = self._analysis_ops(r)
            sub = {(): cur}
            for ax in range(d):
                nxt = {}
                for key, arr in sub.items():
                    nxt[key + (0,)] = _apply_axis(A0, arr, ax)
                    nxt[key + (1,)] = _apply_axis(A1, arr, ax)
                sub = nxt
            if r <= J:
                for e, arr in sub.items():
                    if any(e) or r == 0:
                        bands[(r, e)] = arr.reshape(-1) / self.scales[(r, e)]
            cur = sub[(0,) * d]
        parts = []
        for j in range(J + 1):
            for e in self.level_tags[j]:
                parts.append(bands[(j, e)])
        return np.concatenate(parts)

    def reconstruct(self, v: np.ndarray, J: int) -> np.ndarray:
        """Patch coefficient vector -> primal scaling coefficients at level ``J+1``."""
        d = self.d
        off = self.patch_offsets(J)
        bands = {}
        for j in range(J + 1):
            pos = off[j]
            for e in self.level_tags[j]:
                n = 2 ** (d * j)
                bands[(j, e)] = v[pos:pos + n].reshape((2 ** j,) * d) * self.scales[(j, e)]
                pos += n
        cur = bands[(0, (0,) * d)]
        for r in range(J + 1):
            S0, S1 = self._synthesis_ops(r)
            out = np.zeros((2 ** (r + 1),) * d, dtype=complex)
            for e in _corners(d):
                arr = bands[(r, e)] if any(e) else cur
                for ax, ei in enumerate(e):
                    arr = _apply_axis(S1 if ei else S0, arr, ax)
                out = out + arr
            cur = out
        return cur

    # -- analysis of functions ------------------------------------------

    def dual_scaling_products(self, u: PatchFunction, patch: int, Ls: int, P: int = 3,
                              values: np.ndarray | None = None) -> np.ndarray:
        """``<u o kappa_i, phi~_{Ls,b}>`` from piecewise degree-``P`` interpolation on level-``Ls`` cells.

        Exact when ``u o kappa_i`` is a polynomial of degree ``<= P`` on every
        cell of width ``2^-Ls``.  ``values`` may carry precomputed
        :func:`cell_samples`.
        """
        vals = cell_samples(u, patch, self.d, Ls, P) if values is None else values
        W = self._cell_operator(Ls, P)
        for ax in range(self.d):
            vals = _apply_axis(W, vals, ax)
        return vals

    @lru_cache(maxsize=None)
    def _cell_operator(self, Ls: int, P: int) -> sparse.csr_matrix:
        """Maps per-cell node values (``2^Ls (P+1)``) to dual scaling products (``2^Ls``)."""
        n = 2 ** Ls
        t, _ = np.polynomial.legendre.leggauss(P + 1)
        t = (t + 1) / 2
        Vinv = np.linalg.inv(np.vander(t, P + 1, increasing=True))  # values -> monomial coeffs
        lo, E = cell_moments(self.uni.ht, P)
        # c_b = 2^{-Ls/2} sum_l sum_p a_{l,p} e^p_{b-l}
        wp = E.T @ Vinv  # row m: weights on the node values of the cell at offset lo + m
        M = E.shape[1]
        ls, ms, ps = np.meshgrid(np.arange(n), np.arange(M), np.arange(P + 1), indexing="ij")
        rows = (ls + lo + ms) % n
        cols = ls * (P + 1) + ps
        vals = np.broadcast_to(wp[None, :, :], ls.shape) * 2.0 ** (-Ls / 2)
        return sparse.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n * (P + 1)))


def cell_samples(u: PatchFunction, patch: int, d: int, Ls: int, P: int = 3) -> np.ndarray:
    """Values of ``u o kappa_patch`` at ``P+1`` Gauss-Legendre nodes per axis in each level-``Ls`` cell."""
    n = 2 ** Ls
    t, _ = np.polynomial.legendre.leggauss(P + 1)
    nodes1 = ((np.arange(n)[:, None] + (t[None, :] + 1) / 2) / n).reshape(-1)
    mesh = np.meshgrid(*([nodes1] * d), indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    return np.asarray(u.on_patch(patch, X), dtype=complex).reshape((n * (P + 1),) * d)


class SplineFunction(PatchFunction):
    """Primal spline ``sum_l c_l phi_{L,l}`` per patch for a given system (exact evaluation)."""

    def __init__(self, sys: WaveletSystem, coeffs: list[np.ndarray], L: int):
        self.sys = sys
        self.L = L
        self.coeffs = [np.asarray(c, dtype=complex).reshape((2 ** L,) * sys.d) for c in coeffs]
        super().__init__(sys.dec, [lambda x, i=i: self._eval(i, x) for i in range(sys.dec.N)])

    def _basis_1d(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero level-``L`` basis values at ``x``: indices and values, shape ``(n, D)``."""
        D = self.sys.uni.D
        h0 = self.sys.uni.h.start
        N = 2 ** self.L
        u = N * np.asarray(x, dtype=float)
        first = np.floor(u - h0 - D).astype(int) + 1
        idx = first[:, None] + np.arange(D)[None, :]
        arg = u[:, None] - idx - h0
        B = _cardinal_bspline(D)(arg.ravel()).reshape(arg.shape)
        B = np.nan_to_num(B)
        return np.mod(idx, N), B * 2.0 ** (self.L / 2)

    def _eval(self, i: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        d = self.sys.d
        C = self.coeffs[i]
        per = [self._basis_1d(x[:, ax]) for ax in range(d)]
        D = self.sys.uni.D
        out = np.zeros(len(x), dtype=complex)
        for combo in itertools.product(range(D), repeat=d):
            w = np.ones(len(x))
            index = []
            for ax, c in enumerate(combo):
                w = w * per[ax][1][:, c]
                index.append(per[ax][0][:, c])
            out += w * C[tuple(index)]
        return out


@lru_cache(maxsize=None)
def _cardinal_bspline(D: int):
    return BSpline.basis_element(np.arange(D + 1, dtype=float), extrapolate=False)


def analyze(u: PatchFunction, sys: WaveletSystem, J: int | None = None, oversample: int = 1,
            P: int = 3, samples: list | None = None) -> CoeffSequence:
    """Coefficients ``<u, psi~_{j,xi}>`` for all levels ``<= J`` under the patchwise product.

    Each patch is split into cells of width ``2^-(J+1+oversample)``; on every
    cell ``u`` is interpolated by a degree-``P`` polynomial at Gauss-Legendre
    nodes and paired exactly with the dual scaling functions, followed by the
    fast transform.  Spline inputs of the same system are transformed exactly.
    ``samples`` (one :func:`cell_samples` array per patch) skips evaluating ``u``.
    """
    J = sys.J if J is None else J
    if J > sys.J:
        raise WaveletError(f"J={J} exceeds the system depth {sys.J}")
    vecs = []
    if isinstance(u, SplineFunction) and u.sys.uni is sys.uni and u.sys.dec is sys.dec:
        for i in range(sys.dec.N):
            c = u.coeffs[i]
            vecs.append(sys.decompose(c, J) if u.L >= J + 1 else _pad_decompose(sys, c, u.L, J))
        return sys.from_patch_vectors(vecs, J)
    if samples is not None:
        n = samples[0].shape[0]
        Ls = int(round(math.log2(n // (P + 1))))
        if (P + 1) * 2 ** Ls != n:
            raise WaveletError("sample array does not match P")
    elif isinstance(u, SplineFunction):
        P = max(P, u.sys.uni.D - 1)
        Ls = max(J + 1 + oversample, u.L)
    else:
        Ls = J + 1 + oversample
    for i in range(sys.dec.N):
        vals = None if samples is None else samples[i]
        vecs.append(sys.decompose(sys.dual_scaling_products(u, i, Ls, P, vals), J))
    return sys.from_patch_vectors(vecs, J)


def _pad_decompose(sys: WaveletSystem, c: np.ndarray, L: int, J: int) -> np.ndarray:
    # refine a coarse spline to level J+1 with the primal scaling refinement
    cur = c
    for r in range(L, J + 1):
        S0, _ = sys._synthesis_ops(r)
        for ax in range(sys.d):
            cur = _apply_axis(S0, cur, ax)
    return sys.decompose(cur, J)


def synthesize(a: CoeffSequence, sys: WaveletSystem) -> SplineFunction:
    """``sum a_{j,xi} psi_{j,xi}`` over the levels of ``a`` as an exactly evaluable spline."""
    J = a.grid.J
    if J > sys.J or a.grid.sizes != sys.grid.sizes[:J + 1]:
        raise WaveletError("sequence is not indexed by this system's grid")
    vecs = sys.to_patch_vectors(a)
    return SplineFunction(sys, [sys.reconstruct(v, J) for v in vecs], J + 1)


# ---------------------------------------------------------------------------
# structural checks


def riesz_bounds(sys: WaveletSystem, trials: int = 50, seed: int = 0, J: int | None = None) -> tuple[float, float]:
    """Extremes of ``||sum a psi|| / ||a||`` over random real coefficient vectors (exact Gram evaluation)."""
    J = sys.J if J is None else J
    S = sys.patch_matrix(False, J)
    G1 = periodic_correlation_matrix(sys.uni.correlation(sys.uni, False, False), J + 1)
    G = _kron_all([G1] * sys.d)
    rng = np.random.default_rng(seed)
    N = sys.dec.N
    ratios = []
    for _ in range(trials):
        A = rng.standard_normal((S.shape[1], N))
        F = S @ A
        num = math.sqrt(float(np.sum(F * (G @ F))))
        ratios.append(num / float(np.linalg.norm(A)))
    return min(ratios), max(ratios)


@dataclass
class NormalizationReport:
    ok: bool
    primal_range: tuple
    dual_range: tuple
    lower: float = 0.5
    upper: float = 2.0


def normalization_check(sys: WaveletSystem, lower: float = 0.5, upper: float = 2.0) -> NormalizationReport:
    """All balanced primal and dual ``L_2`` norms lie in ``[lower, upper]``."""
    p = list(sys.norms(False).values())
    q = list(sys.norms(True).values())
    ok = min(p + q) >= lower and max(p + q) <= upper
    return NormalizationReport(ok, (min(p), max(p)), (min(q), max(q)), lower, upper)


@dataclass
class MomentsReport:
    ok: bool
    max_primal: float
    max_dual: float
    checked: int
    tol: float = 1e-8


def _unwrapped_moments_1d(sys: WaveletSystem, r: int, wavelet: bool, dual: bool, P: int) -> np.ndarray:
    """Moments ``int f(x) (x - anchor)^p dx`` of one resolution-``r`` function on the line (unperiodized)."""
    uni = sys.uni
    lo, hi = uni.masks(dual)
    phi_m = refinable_moments(lo, P)
    base = function_moments(hi, phi_m, P) if wavelet else phi_m
    lo_s, hi_s = uni.support(wavelet, dual)
    c = (lo_s + hi_s) / 2
    # f(x) = 2^{r/2} F(2^r x) with anchor c 2^-r: int f (x - a)^p = 2^{-r/2 - r p} int F(u) (u - c)^p du
    out = np.zeros(P + 1)
    for p in range(P + 1):
        s = sum(math.comb(p, i) * base[i] * (-c) ** (p - i) for i in range(p + 1))
        out[p] = 2.0 ** (-r / 2 - r * p) * s
    return out


def moments_check(sys: WaveletSystem, degree_max: int | None = None, tol: float = 1e-8) -> MomentsReport:
    """Vanishing moments of primal wavelets (degree ``< D_dual``) and duals (degree ``< D``).

    Moments are taken against monomials in coordinates centred at the
    anchor.  Functions whose support is wider than the patch wrap around the
    periodic patch and are tested against constants only.
    """
    uni = sys.uni
    d = sys.d
    worst = {False: 0.0, True: 0.0}
    count = 0
    for dual in (False, True):
        order = uni.D if dual else uni.D_dual
        P = order - 1 if degree_max is None else degree_max
        for j in range(sys.J + 1):
            for e in sys.level_tags[j]:
                if not any(e):
                    continue
                widths = [np.diff(uni.support(bool(ei), dual))[0] * 2.0 ** -j for ei in e]
                wraps = max(widths) > 1.0
                Pj = 0 if wraps else P
                mom = [_unwrapped_moments_1d(sys, j, bool(ei), dual, Pj) for ei in e]
                scale = sys.scales[(j, e)]
                for combo in itertools.product(range(Pj + 1), repeat=d):
                    if sum(combo) > Pj:
                        continue
                    val = math.prod(mom[ax][c] for ax, c in enumerate(combo))
                    val = val / scale if dual else val * scale
                    worst[dual] = max(worst[dual], abs(val) * 2.0 ** (j * d / 2))
                    count += 1
    ok = bool(worst[False] < tol and worst[True] < tol)
    return MomentsReport(ok, worst[False], worst[True], count, tol)


@dataclass
class SupportReport:
    ok: bool
    lower: float
    upper: float
    per_level: list = field(default_factory=list)
    anchors_ok: bool = True


def support_diameters(sys: WaveletSystem, j: int, dual: bool = False) -> dict:
    """Diameter per tag at level ``j`` in the periodic local metric of a patch (arc lengths per axis)."""
    out = {}
    for e in sys.level_tags[j]:
        arcs = [min(np.diff(sys.uni.support(bool(ei), dual))[0] * 2.0 ** -j, 1.0) for ei in e]
        out[e] = math.sqrt(sum(a * a for a in arcs))
    return out


def _anchor_in_support(sys: WaveletSystem, j: int, thresh: float = 1e-10, samples: int = 64) -> bool:
    """Scan a neighbourhood of every level-``j`` anchor of patch 0 for primal values above the threshold."""
    d = sys.d
    n = sys.patch_level_size(j)
    off = sys.patch_offsets(j)
    grid_loc = sys.grid.levels[j].local[:n]
    rng = np.random.default_rng(j)
    for idx in range(n):
        v = np.zeros(off[-1])
        v[off[j] + idx] = 1.0
        f = SplineFunction(sys, [sys.reconstruct(v, j)], j + 1) if sys.dec.N == 1 else \
            SplineFunction(sys, [sys.reconstruct(v, j)] + [np.zeros((2 ** (j + 1),) * d)] * (sys.dec.N - 1), j + 1)
        x0 = grid_loc[idx]
        X = np.mod(x0 + 2.0 ** -(j + 3) * rng.uniform(-1, 1, (samples, d)), 1.0)
        near = np.max(np.abs(f.on_patch(0, X)))
        t = np.linspace(0, 1, 2 ** (j + 4), endpoint=False)
        full = np.array(list(itertools.product(t, repeat=d)))
        top = np.max(np.abs(f.on_patch(0, full)))
        if not near > thresh * top:
            return False
    return True


def support_check(sys: WaveletSystem, C: float | None = None, anchor_levels: int = 3) -> SupportReport:
    """``diam(supp) 2^j`` stays within ``[1, C]`` on every level for primal and dual functions.

    With ``C=None`` the report only records the observed band; anchors of the
    primal functions are checked to lie in the numerical support on the first
    ``anchor_levels`` levels.
    """
    rows = []
    lo, hi = math.inf, 0.0
    for j in range(sys.J + 1):
        for dual in (False, True):
            for e, diam in support_diameters(sys, j, dual).items():
                ratio = diam * 2.0 ** j
                rows.append((j, dual, e, ratio))
                lo, hi = min(lo, ratio), max(hi, ratio)
    anchors = all(_anchor_in_support(sys, j) for j in range(min(anchor_levels, sys.J + 1)))
    ok = lo >= 1.0 - 1e-12 and (C is None or hi <= C) and anchors
    return SupportReport(ok, lo, hi, rows, anchors)


@dataclass
class DecayReport:
    rho: float
    ok: bool
    maxima: list


def coefficient_decay_check(sys: WaveletSystem, f: PatchFunction, s: float, J: int | None = None,
                            j_min: int = 2) -> DecayReport:
    """Fit ``max_xi |<f, psi~_{j,xi}>| ~ C 2^{-j rho}`` over ``j >= j_min``; ok iff ``rho >= s - 0.25``."""
    if not sys.d / 2 < s <= sys.uni.D:
        raise WaveletError("need d/2 < s <= D")
    a = analyze(f, sys, J)
    maxima = [float(np.max(np.abs(v), initial=0.0)) for v in a.levels]
    js = np.array([j for j in range(j_min, len(maxima)) if maxima[j] > 1e-14])
    if len(js) < 2:
        return DecayReport(math.inf, True, maxima)
    slope = np.polyfit(js, np.log2([maxima[j] for j in js]), 1)[0]
    rho = -float(slope)
    return DecayReport(rho, rho >= s - 0.25, maxima)
