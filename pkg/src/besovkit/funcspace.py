"""Besov-type function spaces defined through wavelet coefficients.

``B^alpha_{Psi,q}(L_p)`` consists of the functions whose coefficients
``<u, psi~_{j,xi}>`` lie in ``b^alpha_{p,q}``.  Norms are always taken on a
finite truncation ``j <= J``; convergence in ``J`` is left visible to the
caller.  Change of basis between two systems is the Gramian
``G[(j,xi),(k,eta)] = <psi_{k,eta}, phi~_{j,xi}>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import admat
from .admat import ScaleMatrix
from .geometry import Decomposition, PatchFunction, pullback
from .seq import BesovParams, CoeffSequence, adaptivity, admissible_tuple, quasi_norm, sigma_p
from .wavelet import WaveletSystem, _kron_all, analyze, cell_samples, periodic_correlation_matrix

__all__ = [
    "AdmissibilityError",
    "SpaceParams",
    "besov_norm",
    "gramian",
    "GramianDecayReport",
    "gramian_decay_check",
    "change_of_basis",
    "inverse_change_of_basis",
    "default_corpus",
    "EquivalenceReport",
    "equivalence_ratio",
    "l2_embedding_constant",
]


class AdmissibilityError(ValueError):
    """The tuple ``(alpha, p, q)`` does not give a subspace of ``L_2``."""


@dataclass(frozen=True)
class SpaceParams:
    basis: WaveletSystem
    prm: BesovParams

    @property
    def admissible(self) -> bool:
        return admissible_tuple(self.prm.alpha, self.prm.p, self.prm.q, self.prm.d, self.basis.grid.bounded)

    def require(self):
        if self.prm.d != self.basis.d:
            raise AdmissibilityError(f"parameters for d={self.prm.d} but the basis lives in d={self.basis.d}")
        if not self.admissible:
            raise AdmissibilityError(f"(alpha, p, q) = ({self.prm.alpha}, {self.prm.p}, {self.prm.q}) "
                                     f"is not admissible in d={self.prm.d}")


def besov_norm(u: PatchFunction | CoeffSequence, sp_: SpaceParams, J: int | None = None) -> float:
    """Truncated ``B^alpha_{Psi,q}(L_p)`` quasi-norm of ``u`` (a function or its coefficients)."""
    sp_.require()
    if isinstance(u, CoeffSequence):
        a = u if J is None else CoeffSequence(u.grid.truncate(J), u.levels[:J + 1])
    else:
        a = analyze(u, sp_.basis, J)
    return quasi_norm(a, sp_.prm)


def _check_pair(psi: WaveletSystem, phi: WaveletSystem):
    if psi.dec is not phi.dec and psi.dec.to_json() != phi.dec.to_json():
        raise ValueError("Gramian needs both systems on the same decomposition")


def gramian(psi: WaveletSystem, phi: WaveletSystem, J: int | None = None) -> ScaleMatrix:
    """``G[(j,xi),(k,eta)] = <psi_{k,eta}, phi~_{j,xi}>`` under the patchwise product, levels ``<= J``.

    Entries are exact up to rounding: both families are expanded in their
    level-``J+1`` scaling bases and paired through the exact cross-correlation
    of the two refinable functions.  Products of disjointly supported
    functions are therefore exactly zero.  Different patches are orthogonal.
    """
    _check_pair(psi, phi)
    J = min(psi.J, phi.J) if J is None else J
    if J > min(psi.J, phi.J):
        raise ValueError("J exceeds a system depth")
    L = J + 1
    S = psi.patch_matrix(False, J)
    T = phi.patch_matrix(True, J)
    c = psi.uni.correlation(phi.uni, False, True)
    C1 = periodic_correlation_matrix(c, L)
    C = _kron_all([C1] * psi.d)
    Gp = T.T @ C.T @ S
    off_r = phi.patch_offsets(J)
    off_c = psi.patch_offsets(J)
    row_grid = phi.grid if J == phi.J else phi.grid.truncate(J)
    col_grid = psi.grid if J == psi.J else psi.grid.truncate(J)
    eye = sp.identity(psi.dec.N, format="csr")
    blocks = {}
    for j in range(J + 1):
        for k in range(J + 1):
            B = Gp[off_r[j]:off_r[j + 1], off_c[k]:off_c[k + 1]]
            if np.any(B):
                blocks[(j, k)] = sp.kron(eye, sp.csr_matrix(B), format="csr")
    return ScaleMatrix(row_grid, col_grid, blocks)


def change_of_basis(a: CoeffSequence, G: ScaleMatrix) -> CoeffSequence:
    """Coefficients with respect to ``Phi`` of the function with ``Psi``-coefficients ``a``."""
    return admat.apply(G, a)


def inverse_change_of_basis(b: CoeffSequence, G: ScaleMatrix) -> CoeffSequence:
    """Solve ``G a = b`` on the truncation (sparse direct solve)."""
    x = spla.spsolve(G.to_sparse().tocsc(), b.flat().astype(complex))
    return CoeffSequence.from_flat(G.col_grid, x)


@dataclass
class GramianDecayReport:
    slope_up: float
    slope_down: float
    required_up: float
    required_down: float
    ok: bool
    offsets: list = field(default_factory=list)
    maxima: list = field(default_factory=list)


def gramian_decay_check(G: ScaleMatrix, psi: WaveletSystem, phi: WaveletSystem, alpha: float,
                        eps0: float = 0.1, floor: float = 1e-12) -> GramianDecayReport:
    """Fit ``log2 max|G|`` against the level offset ``l = j - k`` separately for ``l > 0`` and ``l < 0``.

    The slope for ``l > 0`` must be at most ``-(d/2 + alpha + eps0)``; the
    slope in ``|l|`` for ``l < 0`` at most ``-(d/2 - alpha + eps0 + sigma_tau)``
    with ``1/tau = alpha/d + 1/2``.  Offsets whose blocks vanish entirely are
    left out, as are blocks below ``floor`` (rounding noise); with no data on a side
    the requirement holds vacuously.
    """
    d = psi.d
    maxima = {}
    for (j, k), B in G.blocks.items():
        if j == k or B.nnz == 0:
            continue
        m = float(np.max(np.abs(B.data)))
        if m > floor:
            maxima[j - k] = max(maxima.get(j - k, 0.0), m)
    tau = adaptivity(alpha, d)
    req_up = -(d / 2 + alpha + eps0)
    req_down = -(d / 2 - alpha + eps0 + sigma_p(tau, d))

    def fit(ls):
        if len(ls) < 2:
            return -math.inf
        x = np.abs(np.array(ls, float))
        y = np.log2([maxima[l] for l in ls])
        return float(np.polyfit(x, y, 1)[0])

    up = sorted(l for l in maxima if l > 0)
    down = sorted(l for l in maxima if l < 0)
    s_up, s_down = fit(up), fit(down)
    ok = s_up <= req_up and s_down <= req_down
    offs = sorted(maxima)
    return GramianDecayReport(s_up, s_down, req_up, req_down, bool(ok), offs, [maxima[l] for l in offs])


# ---------------------------------------------------------------------------
# test corpus


def _coord(y: np.ndarray, i: int) -> np.ndarray:
    return y[:, min(i, y.shape[1] - 1)]


def default_corpus(dec: Decomposition) -> list[tuple[str, PatchFunction]]:
    """Ten functions mixing smooth behaviour with localized singularities.

    Functions are given in ambient coordinates and pulled back to the
    patches, so kinks placed on interfaces really cross between patches.
    """
    m = dec.m
    centre = np.array([dec.patches[0](np.full((1, dec.d), 0.37))[0]]).reshape(m)
    seam = dec.patches[0](np.ones((1, dec.d)))[0, 0]
    fns = {
        "constant": lambda y: np.ones(len(y)),
        "sin": lambda y: np.sin(2 * np.pi * _coord(y, 0)),
        "cos-sin": lambda y: np.cos(2 * np.pi * _coord(y, 0)) * np.sin(np.pi * _coord(y, 1) + 0.3),
        "ramp": lambda y: _coord(y, 0) + 0.5 * _coord(y, m - 1),
        "quadratic": lambda y: (_coord(y, 0) - 0.3) ** 2 - 0.5 * _coord(y, 1) ** 2,
        "exp": lambda y: np.exp(0.7 * _coord(y, 0) - 0.4 * _coord(y, m - 1)),
        "bump": lambda y: np.exp(-8.0 * np.sum((y - centre) ** 2, axis=1)),
        "point-singularity": lambda y: np.linalg.norm(y - centre, axis=1) ** 0.75,
        "interface-kink": lambda y: np.abs(_coord(y, 0) - seam),
        "line-singularity": lambda y: np.abs(_coord(y, 0) - 1.0 / 3.0) ** 0.6,
    }
    return [(name, pullback(f, dec)) for name, f in fns.items()]


@dataclass
class EquivalenceReport:
    min_ratio: float
    max_ratio: float
    per_J: dict
    ratios: dict


def equivalence_ratio(corpus, psi: WaveletSystem, phi: WaveletSystem, prm: BesovParams,
                      J_range=None, oversample: int = 1) -> EquivalenceReport:
    """Ratios ``||u||_{B(Psi)} / ||u||_{B(Phi)}`` over a corpus and a range of truncation levels.

    Each function is analyzed once at the deepest level and the norms for
    smaller ``J`` use the leading levels of the same coefficients.
    """
    _check_pair(psi, phi)
    for s in (SpaceParams(psi, prm), SpaceParams(phi, prm)):
        s.require()
    J_range = list(J_range) if J_range is not None else list(range(min(psi.J, phi.J) + 1))
    Jmax = max(J_range)
    ratios = {}
    for item in corpus:
        name, u = item if isinstance(item, tuple) else (str(len(ratios)), item)
        Ls = Jmax + 1 + oversample
        samples = [cell_samples(u, i, psi.d, Ls) for i in range(psi.dec.N)]
        a = analyze(u, psi, Jmax, samples=samples)
        b = analyze(u, phi, Jmax, samples=samples)
        for J in J_range:
            na = quasi_norm(CoeffSequence(a.grid.truncate(J), a.levels[:J + 1]), prm)
            nb = quasi_norm(CoeffSequence(b.grid.truncate(J), b.levels[:J + 1]), prm)
            ratios[(name, J)] = na / nb if nb > 0 else (1.0 if na == 0 else math.inf)
    per_J = {J: (min(r for (n, jj), r in ratios.items() if jj == J),
                 max(r for (n, jj), r in ratios.items() if jj == J)) for J in J_range}
    vals = list(ratios.values())
    return EquivalenceReport(min(vals), max(vals), per_J, ratios)


def l2_embedding_constant(prm: BesovParams, grid) -> float:
    """``c`` with ``||a||_{b^alpha_{p,q}} >= c ||a||_{l_2}`` for all sequences on ``grid`` (0 if not admissible).

    Per level, ``||a_j||_2 <= n_j^{max(0, 1/2-1/p)} ||a_j||_p`` with
    ``n_j = #level j <= K 2^{dj}``.  What remains of the level weight is
    ``2^{j beta}`` with ``beta = alpha + d (1/2 - 1/p)`` for ``p <= 2`` and
    ``beta = alpha`` for ``p > 2``.  Summing over levels costs nothing for
    ``q <= 2`` and ``(1 - 2^{-2 beta})^{-1/2}`` for ``q > 2``.
    """
    if not admissible_tuple(prm.alpha, prm.p, prm.q, prm.d, grid.bounded):
        return 0.0
    d, p, q = prm.d, prm.p, prm.q
    if p > 2:
        K = max(n / 2.0 ** (d * j) for j, n in enumerate(grid.sizes))
        c = K ** -(0.5 - 1.0 / p)
        beta = prm.alpha
    else:
        c = 1.0
        beta = prm.alpha + d * (0.5 - 1.0 / p)
    if q > 2:
        if beta <= 0:
            return 0.0
        c *= math.sqrt(1.0 - 2.0 ** (-2 * beta))
    return c
