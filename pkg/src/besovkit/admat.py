"""Almost diagonal matrices between Besov-type sequence spaces.

A matrix ``M = {m_(j,xi),(k,eta)}`` is almost diagonal in ``ad_p^{alpha0,alpha1}``
if ``|m| <= C omega(eps)`` for some ``eps > 0``, where

    omega = 2^{k alpha0 - j alpha1}
            * min(2^{-(j-k)(d/2+eps)}, 2^{(j-k)(d/2+eps+sigma_p)})
            / [1 + min(2^k, 2^j) dist(xi, eta)]^{d+eps+sigma_p}.

Such matrices map ``b^{alpha0}_{p,q}`` boundedly into ``b^{alpha1}_{p,q}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .grid import IndexPoint, MultiscaleGrid, pseudo_dist
from .seq import BesovParams, CoeffSequence, sigma_p

__all__ = [
    "AdParams",
    "ScaleMatrix",
    "omega",
    "omega_block",
    "ad_membership",
    "ad_fit_epsilon",
    "apply",
    "apply_split",
    "schur_bound",
    "empirical_operator_norm",
    "random_ad_matrix",
    "diagonal_scaling",
]


@dataclass(frozen=True)
class AdParams:
    alpha0: float
    alpha1: float
    p: float
    epsilon: float
    d: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.p > 0:
            raise ValueError("p must be positive")

    def with_epsilon(self, eps: float) -> "AdParams":
        return AdParams(self.alpha0, self.alpha1, self.p, eps, self.d)

    def with_p(self, p: float) -> "AdParams":
        return AdParams(self.alpha0, self.alpha1, p, self.epsilon, self.d)


def _omega_formula(j, k, dist, prm: AdParams):
    d, eps, sig = prm.d, prm.epsilon, sigma_p(prm.p, prm.d)
    lvl = np.minimum(2.0 ** (-(j - k) * (d / 2 + eps)), 2.0 ** ((j - k) * (d / 2 + eps + sig)))
    return 2.0 ** (k * prm.alpha0 - j * prm.alpha1) * lvl / (1.0 + 2.0 ** min(j, k) * dist) ** (d + eps + sig)


def omega(j: int, xi: IndexPoint, k: int, eta: IndexPoint, prm: AdParams) -> float:
    """The weight ``omega_{(j,xi),(k,eta)}(eps)`` with the chord pseudometric."""
    return float(_omega_formula(j, k, pseudo_dist(xi, eta), prm))


def omega_block(row_grid: MultiscaleGrid, col_grid: MultiscaleGrid, j: int, k: int,
                prm: AdParams) -> np.ndarray:
    """All weights between ``nabla^1_j`` (rows) and ``nabla^0_k`` (columns)."""
    dist = cdist(row_grid.levels[j].points, col_grid.levels[k].points)
    return _omega_formula(j, k, dist, prm)


class ScaleMatrix:
    """Level-block sparse matrix; ``blocks[(j, k)]`` maps level ``k`` of the column grid to level ``j`` of the row grid."""

    def __init__(self, row_grid: MultiscaleGrid, col_grid: MultiscaleGrid, blocks: dict | None = None):
        if row_grid.d != col_grid.d:
            raise ValueError("row and column grids must have the same dimension")
        self.row_grid = row_grid
        self.col_grid = col_grid
        self.blocks = {}
        for (j, k), B in (blocks or {}).items():
            self[j, k] = B

    def __setitem__(self, key, B):
        j, k = key
        B = sp.csr_matrix(B, dtype=complex)
        if B.shape != (self.row_grid.sizes[j], self.col_grid.sizes[k]):
            raise ValueError(f"block {key} has shape {B.shape}")
        B.eliminate_zeros()
        if B.nnz:
            self.blocks[(j, k)] = B
        else:
            self.blocks.pop((j, k), None)

    def block(self, j: int, k: int) -> sp.csr_matrix:
        B = self.blocks.get((j, k))
        if B is None:
            B = sp.csr_matrix((self.row_grid.sizes[j], self.col_grid.sizes[k]), dtype=complex)
        return B

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_grid), len(self.col_grid)

    @property
    def nnz(self) -> int:
        return sum(B.nnz for B in self.blocks.values())

    @classmethod
    def identity(cls, grid: MultiscaleGrid) -> "ScaleMatrix":
        return cls(grid, grid, {(j, j): sp.identity(n, format="csr") for j, n in enumerate(grid.sizes)})

    @classmethod
    def from_dense(cls, row_grid: MultiscaleGrid, col_grid: MultiscaleGrid, A: np.ndarray) -> "ScaleMatrix":
        rc = np.cumsum([0] + row_grid.sizes)
        cc = np.cumsum([0] + col_grid.sizes)
        M = cls(row_grid, col_grid)
        for j in range(row_grid.J + 1):
            for k in range(col_grid.J + 1):
                M[j, k] = A[rc[j]:rc[j + 1], cc[k]:cc[k + 1]]
        return M

    def to_dense(self) -> np.ndarray:
        rc = np.cumsum([0] + self.row_grid.sizes)
        cc = np.cumsum([0] + self.col_grid.sizes)
        A = np.zeros(self.shape, dtype=complex)
        for (j, k), B in self.blocks.items():
            A[rc[j]:rc[j + 1], cc[k]:cc[k + 1]] = B.toarray()
        return A

    def to_sparse(self) -> sp.csr_matrix:
        rows = []
        for j in range(self.row_grid.J + 1):
            rows.append([self.block(j, k) for k in range(self.col_grid.J + 1)])
        return sp.bmat(rows, format="csr")

    def triplets(self):
        """COO triplets ``(j, row, k, col, value)`` per block, in block order."""
        for (j, k) in sorted(self.blocks):
            C = self.blocks[(j, k)].tocoo()
            for r, c, v in zip(C.row, C.col, C.data):
                yield j, int(r), k, int(c), complex(v)

    def truncate(self, row_grid: MultiscaleGrid, col_grid: MultiscaleGrid) -> "ScaleMatrix":
        return ScaleMatrix(row_grid, col_grid, {(j, k): B for (j, k), B in self.blocks.items()
                                                if j <= row_grid.J and k <= col_grid.J})


def _level_pair_weights(M: ScaleMatrix, j: int, k: int, prm: AdParams) -> np.ndarray:
    return omega_block(M.row_grid, M.col_grid, j, k, prm)


@dataclass
class MembershipReport:
    sup_ratio: float
    witness: tuple | None


def ad_membership(M: ScaleMatrix, prm: AdParams) -> MembershipReport:
    """``sup |m| / omega(eps)`` over stored entries, with the maximizing index pair."""
    if M.row_grid.d != prm.d:
        raise ValueError("grid and parameter dimensions differ")
    best, witness = 0.0, None
    for (j, k), B in M.blocks.items():
        C = B.tocoo()
        dist = np.linalg.norm(M.row_grid.levels[j].points[C.row] - M.col_grid.levels[k].points[C.col], axis=1)
        ratio = np.abs(C.data) / _omega_formula(j, k, dist, prm)
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best, witness = float(ratio[i]), ((j, int(C.row[i])), (k, int(C.col[i])))
    return MembershipReport(best, witness)


def ad_fit_epsilon(M: ScaleMatrix, alpha0: float, alpha1: float, p: float, cap: float = 1.0,
                   eps_max: float = 4.0, tol: float = 1e-6) -> float:
    """Largest ``eps`` in ``(0, eps_max]`` with ``sup_ratio <= cap``, by bisection.

    Returns ``eps_max`` if no constraint binds and ``0.0`` if none is admissible.
    """
    d = M.row_grid.d

    def ratio(e):
        return ad_membership(M, AdParams(alpha0, alpha1, p, e, d)).sup_ratio

    if ratio(eps_max) <= cap:
        return eps_max
    lo, hi = 0.0, eps_max
    if ratio(tol * 1e-3) > cap:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ratio(max(mid, tol * 1e-3)) <= cap:
            lo = mid
        else:
            hi = mid
    return lo


def apply_split(M: ScaleMatrix, a: CoeffSequence) -> tuple[CoeffSequence, CoeffSequence]:
    """``(M^- a, M^+ a)``: contributions from coarser levels ``k < j`` and from ``k >= j``."""
    if a.grid.sizes != M.col_grid.sizes:
        raise ValueError("sequence is not indexed by the column grid")
    minus = [np.zeros(n, dtype=complex) for n in M.row_grid.sizes]
    plus = [np.zeros(n, dtype=complex) for n in M.row_grid.sizes]
    for (j, k) in sorted(M.blocks):
        target = minus if k < j else plus
        target[j] += M.blocks[(j, k)] @ a.levels[k]
    return CoeffSequence(M.row_grid, minus), CoeffSequence(M.row_grid, plus)


def apply(M: ScaleMatrix, a: CoeffSequence) -> CoeffSequence:
    """``M a``, defined as ``M^- a + M^+ a`` so the split is exact."""
    minus, plus = apply_split(M, a)
    return minus + plus


def schur_bound(K, p: float) -> float:
    """``C1^{1/p} C2^{1/p'}`` for the operator ``x -> K x`` on counting measures.

    ``C1`` is the largest column sum of ``|K|`` (sup over inputs of the sum
    over outputs) and ``C2`` the largest row sum.
    """
    if p < 1:
        raise ValueError("the Schur bound needs 1 <= p <= inf")
    A = abs(K)
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    C1 = float(A.sum(axis=0).max(initial=0.0))
    C2 = float(A.sum(axis=1).max(initial=0.0))
    if math.isinf(p):
        return C2
    if p == 1:
        return C1
    return C1 ** (1.0 / p) * C2 ** (1.0 - 1.0 / p)


# ---------------------------------------------------------------------------
# random matrices and norm estimation


def random_ad_matrix(row_grid: MultiscaleGrid, col_grid: MultiscaleGrid, prm: AdParams,
                     seed: int = 0, cutoff: float = 1e-14, signs: str = "uniform") -> ScaleMatrix:
    """Entries ``omega(eps) * u`` with ``u`` uniform in ``[-1, 1]`` (or random signs).

    The random factors of block ``(j, k)`` depend only on ``(seed, j, k)``,
    so matrices built on nested truncations of one grid are restrictions of
    each other.  Entries below ``cutoff`` times the block maximum are dropped.
    """
    M = ScaleMatrix(row_grid, col_grid)
    for j in range(row_grid.J + 1):
        for k in range(col_grid.J + 1):
            W = omega_block(row_grid, col_grid, j, k, prm)
            rng = np.random.default_rng([seed, j, k])
            if signs == "uniform":
                u = rng.uniform(-1.0, 1.0, W.shape)
            elif signs == "sign":
                u = rng.choice([-1.0, 1.0], W.shape)
            else:
                raise ValueError("signs must be 'uniform' or 'sign'")
            B = W * u
            B[W < cutoff * W.max(initial=0.0)] = 0.0
            M[j, k] = B
    return M


def diagonal_scaling(grid: MultiscaleGrid, gamma: float) -> ScaleMatrix:
    """Diagonal matrix with entries ``2^{j gamma}``."""
    return ScaleMatrix(grid, grid, {(j, j): 2.0 ** (j * gamma) * sp.identity(n, format="csr")
                                    for j, n in enumerate(grid.sizes)})


def _batch_norms(X: np.ndarray, sizes: list[int], prm: BesovParams) -> np.ndarray:
    """Quasi-norms of the columns of ``X`` (rows ordered level by level)."""
    cuts = np.cumsum([0] + list(sizes))
    p, q = prm.p, prm.q
    A = np.abs(X)
    lv = np.stack([(A[cuts[j]:cuts[j + 1]] ** p).sum(axis=0) ** (1.0 / p)
                   for j in range(len(sizes))])
    w = 2.0 ** (np.arange(len(sizes)) * prm.weight_exponent)[:, None] * lv
    if math.isinf(q):
        return w.max(axis=0)
    return (w ** q).sum(axis=0) ** (1.0 / q)


def _level_weights(sizes, prm: BesovParams) -> np.ndarray:
    return np.concatenate([np.full(n, 2.0 ** (j * prm.weight_exponent)) for j, n in enumerate(sizes)])


def empirical_operator_norm(M: ScaleMatrix, src: BesovParams, dst: BesovParams,
                            trials: int = 200, seed: int = 0, refine: int = 30) -> float:
    """Lower bound for ``||M : b(src) -> b(dst)||`` by maximizing over test inputs.

    Candidates are all unit vectors, leading singular vectors of the
    weighted matrix, level-structured vectors (one level filled with one
    sign pattern) and ``trials`` random vectors.  The best candidates are then
    improved by a nonlinear power iteration.  Every input is normalized to
    unit source quasi-norm, so the result never exceeds the true norm.
    """
    A = M.to_dense()
    rs, cs = M.row_grid.sizes, M.col_grid.sizes
    n = A.shape[1]
    if n == 0 or not np.any(A):
        return 0.0
    rng = np.random.default_rng(seed)
    cands = [np.eye(n)]
    w0 = _level_weights(cs, src)
    w1 = _level_weights(rs, dst)
    W = (w1[:, None] * A) / w0[None, :]
    try:
        _, _, Vh = np.linalg.svd(W, full_matrices=False)
        cands.append((Vh[:min(8, len(Vh))].conj().T) / w0[:, None])
    except np.linalg.LinAlgError:
        pass
    cuts = np.cumsum([0] + list(cs))
    lvl = np.zeros((n, 2 * len(cs)))
    for k in range(len(cs)):
        lvl[cuts[k]:cuts[k + 1], 2 * k] = 1.0
        lvl[cuts[k]:cuts[k + 1], 2 * k + 1] = (-1.0) ** np.arange(cs[k])
    cands.append(lvl)
    if trials:
        R = rng.standard_normal((n, trials)) * (2.0 ** (-rng.uniform(0, 2, trials)))[None, :]
        cands.append(R / w0[:, None])
    X = np.concatenate(cands, axis=1)
    nx = _batch_norms(X, cs, src)
    X = X[:, nx > 0] / nx[nx > 0]
    vals = _batch_norms(A @ X, rs, dst)
    best = float(vals.max())
    # nonlinear power iteration from the top candidates
    order = np.argsort(vals)[::-1][:8]
    for col in order:
        x = X[:, col]
        for _ in range(refine):
            y = A @ x
            g = np.conj(A).T @ (np.abs(y) ** (max(dst.p, 1.0) - 1) * np.exp(1j * np.angle(y)) * w1 ** dst.p)
            x_new = np.abs(g) ** (1.0 / max(src.p - 1.0, 1e-3)) * np.exp(1j * np.angle(g)) if src.p > 1 else g
            x_new = x_new / w0 ** (1.0 if src.p <= 1 else src.p / (src.p - 1))
            nn = _batch_norms(x_new[:, None], cs, src)[0]
            if not nn > 0 or not np.all(np.isfinite(x_new)):
                break
            x_new = x_new / nn
            v = float(_batch_norms((A @ x_new)[:, None], rs, dst)[0])
            if v <= best * (1 + 1e-12) and v <= float(_batch_norms((A @ x)[:, None], rs, dst)[0]):
                break
            best = max(best, v)
            x = x_new
    return best
