"""Besov-type sequence spaces ``b^alpha_{p,q}`` on multiscale grids.

The quasi-norm of ``a = (a_{j,xi})`` is

    ( sum_j 2^{j (alpha + d (1/2 - 1/p)) q} ( sum_xi |a_{j,xi}|^p )^{q/p} )^{1/q}

with the usual supremum for ``q = inf``.  On the adaptivity scale
``1/tau = alpha_tau / d + 1/2`` it coincides with the plain ``l_tau`` norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import MultiscaleGrid

__all__ = [
    "BesovParams",
    "CoeffSequence",
    "sigma_p",
    "adaptivity",
    "adaptivity_alpha",
    "level_weight",
    "quasi_norm",
    "lp_norm",
    "embedding_exists",
    "embedding_threshold",
    "admissible_tuple",
    "hardy_sums",
    "counterexample_sequence",
    "random_sequence",
]

INF = math.inf
_EQ_TOL = 1e-12


@dataclass(frozen=True)
class BesovParams:
    """Parameters ``(alpha, p, q)`` of ``b^alpha_{p,q}`` in dimension ``d``; ``q = math.inf`` is allowed."""

    alpha: float
    p: float
    q: float
    d: int = 1

    def __post_init__(self):
        if not self.p > 0 or math.isinf(self.p):
            raise ValueError(f"p must lie in (0, inf), got {self.p}")
        if not self.q > 0:
            raise ValueError(f"q must be positive or inf, got {self.q}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")

    @property
    def sigma(self) -> float:
        return sigma_p(self.p, self.d)

    @property
    def weight_exponent(self) -> float:
        """``alpha + d (1/2 - 1/p)``, the per-level exponent of the weight."""
        return self.alpha + self.d * (0.5 - 1.0 / self.p)

    def with_alpha(self, alpha: float) -> "BesovParams":
        return BesovParams(alpha, self.p, self.q, self.d)

    @classmethod
    def parse(cls, text: str, d: int = 1) -> "BesovParams":
        """Parse ``"alpha,p,q"``; ``q`` may be ``inf``."""
        parts = [s.strip() for s in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected 'alpha,p,q', got {text!r}")
        return cls(float(parts[0]), float(parts[1]), float(parts[2]), d)


def sigma_p(p: float, d: int) -> float:
    """``d * max(1/p - 1, 0)``."""
    if p <= 0:
        raise ValueError("p must be positive")
    return d * max(1.0 / p - 1.0, 0.0)


def adaptivity(alpha_tau: float, d: int) -> float:
    """``tau = (alpha_tau / d + 1/2)^{-1}`` on the adaptivity scale."""
    if alpha_tau < 0:
        raise ValueError("alpha_tau must be nonnegative")
    return 1.0 / (alpha_tau / d + 0.5)


def adaptivity_alpha(tau: float, d: int) -> float:
    """Inverse of :func:`adaptivity`: ``alpha_tau = d (1/tau - 1/2)``."""
    if not 0 < tau <= 2:
        raise ValueError("tau must lie in (0, 2]")
    return d * (1.0 / tau - 0.5)


class CoeffSequence:
    """Coefficients ``a_{(j, xi)}`` indexed by a multiscale grid.

    Stored densely per level; absent entries are zero.
    """

    def __init__(self, grid: MultiscaleGrid, levels: Iterable | None = None):
        self.grid = grid
        if levels is None:
            levels = [np.zeros(n, dtype=complex) for n in grid.sizes]
        levels = [np.asarray(v, dtype=complex).copy() for v in levels]
        if len(levels) != grid.J + 1 or any(len(v) != n for v, n in zip(levels, grid.sizes)):
            raise ValueError("level arrays must match the grid sizes")
        self.levels = levels

    @classmethod
    def zeros(cls, grid: MultiscaleGrid) -> "CoeffSequence":
        return cls(grid)

    @classmethod
    def from_entries(cls, grid: MultiscaleGrid, entries) -> "CoeffSequence":
        """Build from ``{(j, idx): value}`` or an iterable of ``(j, idx, value)``."""
        a = cls(grid)
        items = entries.items() if isinstance(entries, dict) else (((j, i), v) for j, i, v in entries)
        for (j, i), v in items:
            if not (0 <= j <= grid.J and 0 <= i < grid.sizes[j]):
                raise KeyError(f"index ({j}, {i}) not in grid")
            a.levels[j][i] = v
        return a

    @classmethod
    def delta(cls, grid: MultiscaleGrid, j: int, idx: int) -> "CoeffSequence":
        return cls.from_entries(grid, {(j, idx): 1.0})

    def entries(self) -> list[tuple[int, int, complex]]:
        out = []
        for j, v in enumerate(self.levels):
            for i in np.flatnonzero(v):
                out.append((j, int(i), complex(v[i])))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate(self.levels)

    @classmethod
    def from_flat(cls, grid: MultiscaleGrid, v: np.ndarray) -> "CoeffSequence":
        cuts = np.cumsum([0] + grid.sizes)
        return cls(grid, [v[cuts[j]:cuts[j + 1]] for j in range(grid.J + 1)])

    def copy(self) -> "CoeffSequence":
        return CoeffSequence(self.grid, self.levels)

    @property
    def nnz(self) -> int:
        return int(sum(np.count_nonzero(v) for v in self.levels))

    def _check(self, other: "CoeffSequence"):
        if other.grid is not self.grid and other.grid.sizes != self.grid.sizes:
            raise ValueError("sequences live on different grids")

    def __add__(self, other: "CoeffSequence") -> "CoeffSequence":
        self._check(other)
        return CoeffSequence(self.grid, [a + b for a, b in zip(self.levels, other.levels)])

    def __sub__(self, other: "CoeffSequence") -> "CoeffSequence":
        self._check(other)
        return CoeffSequence(self.grid, [a - b for a, b in zip(self.levels, other.levels)])

    def __mul__(self, c) -> "CoeffSequence":
        return CoeffSequence(self.grid, [c * a for a in self.levels])

    __rmul__ = __mul__

    def __neg__(self) -> "CoeffSequence":
        return self * -1

    def allclose(self, other: "CoeffSequence", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        self._check(other)
        return all(np.allclose(a, b, atol=atol, rtol=rtol) for a, b in zip(self.levels, other.levels))


def _level_power_sum(v: np.ndarray, p: float) -> float:
    """``sum |v|^p`` accumulated in descending magnitude order (exactly rounded)."""
    mag = np.abs(v)
    mag = mag[mag > 0]
    if mag.size == 0:
        return 0.0
    return math.fsum(np.sort(mag)[::-1] ** p)


def level_weight(j: int, prm: BesovParams) -> float:
    return 2.0 ** (j * prm.weight_exponent)


def quasi_norm(a: CoeffSequence, prm: BesovParams) -> float:
    """The ``b^alpha_{p,q}`` quasi-norm of ``a``."""
    if a.grid.d != prm.d:
        raise ValueError(f"grid dimension {a.grid.d} differs from parameter dimension {prm.d}")
    return _quasi_norm_levels(a.levels, prm)


def _quasi_norm_levels(levels, prm: BesovParams) -> float:
    p, q = prm.p, prm.q
    sums = [_level_power_sum(v, p) for v in levels]
    if math.isinf(q):
        return max((level_weight(j, prm) * s ** (1.0 / p) for j, s in enumerate(sums)), default=0.0)
    if q == p:
        terms = [level_weight(j, prm) ** q * s for j, s in enumerate(sums)]
    else:
        terms = [level_weight(j, prm) ** q * s ** (q / p) for j, s in enumerate(sums)]
    return math.fsum(sorted(terms, reverse=True)) ** (1.0 / q)


def lp_norm(a: CoeffSequence, p: float) -> float:
    """Plain ``l_p`` (quasi-)norm over all indices."""
    if math.isinf(p):
        return float(max((np.max(np.abs(v), initial=0.0) for v in a.levels), default=0.0))
    return _level_power_sum(a.flat(), p) ** (1.0 / p)


def embedding_threshold(p0: float, p1: float, d: int) -> float:
    return d * max(0.0, 1.0 / p0 - 1.0 / p1)


def embedding_exists(src: BesovParams, dst: BesovParams, bounded: bool = True) -> bool:
    """Whether ``b^{alpha+gamma}_{p0,q0} -> b^alpha_{p1,q1}`` with ``gamma = src.alpha - dst.alpha``.

    True iff ``gamma`` exceeds ``d max(0, 1/p0 - 1/p1)``, or equals it and
    ``q0 <= q1``.  Unbounded grids additionally need ``p0 <= p1``.
    """
    if src.d != dst.d:
        raise ValueError("dimension mismatch")
    gamma = src.alpha - dst.alpha
    thr = embedding_threshold(src.p, dst.p, src.d)
    if math.isclose(gamma, thr, rel_tol=0.0, abs_tol=_EQ_TOL):
        ok = src.q <= dst.q
    else:
        ok = gamma > thr
    if not bounded:
        ok = ok and src.p <= dst.p
    return ok


def admissible_tuple(alpha: float, p: float, q: float, d: int, bounded: bool = True) -> bool:
    """Whether ``b^alpha_{p,q}`` embeds into ``l_2`` (so the function space sits in ``L_2``)."""
    if not p > 0 or not q > 0:
        return False
    if math.isinf(p) or (not bounded and p > 2):
        return False
    thr = d * max(0.0, 1.0 / p - 0.5)
    if math.isclose(alpha, thr, rel_tol=0.0, abs_tol=_EQ_TOL):
        return q <= 2
    return alpha > thr


def hardy_sums(x, delta: float, r: float, q: float, direction: str = "below") -> float:
    """``l_q`` norm over ``j >= 0`` of the discrete Hardy averages of a finite ``x``.

    ``below``: ``[sum_{k<j} 2^{-delta (j-k) r} |x_k|^r]^{1/r}``;
    ``above``: ``[sum_{k>=j} 2^{delta (j-k) r} |x_k|^r]^{1/r}``.
    For ``below`` the infinitely many ``j >= len(x)`` form a geometric tail
    that is summed in closed form.
    """
    if delta <= 0 or r <= 0 or q <= 0:
        raise ValueError("delta, r and q must be positive")
    x = np.abs(np.asarray(x, dtype=complex))
    n = len(x)
    k = np.arange(n)
    if direction == "below":
        jj = np.arange(n + 1)
        mask = k[None, :] < jj[:, None]
        w = np.where(mask, 2.0 ** (-delta * (jj[:, None] - k[None, :]) * r), 0.0)
    elif direction == "above":
        jj = np.arange(n)
        mask = k[None, :] >= jj[:, None]
        w = np.where(mask, 2.0 ** (delta * (jj[:, None] - k[None, :]) * r), 0.0)
    else:
        raise ValueError("direction must be 'below' or 'above'")
    y = (w @ x ** r) ** (1.0 / r)
    if math.isinf(q):
        return float(np.max(y, initial=0.0))
    total = math.fsum(y ** q)
    if direction == "below":
        # y_j = 2^{-delta (j-n)} y_n for j >= n; y_n is already included once
        total += y[n] ** q * 2.0 ** (-delta * q) / (1.0 - 2.0 ** (-delta * q))
    return total ** (1.0 / q)


def counterexample_sequence(kind: str, src: BesovParams, dst: BesovParams,
                            grid: MultiscaleGrid) -> CoeffSequence:
    """Sequences in ``b^{alpha+gamma}_{p0,q0}`` but not in ``b^alpha_{p1,q1}``, truncated to ``grid``.

    ``gamma-negative``: ``2^{-j(d/2 + alpha + gamma/2)}`` on every index (for ``gamma < 0``).
    ``gamma-boundary``: one spike per level, ``2^{-j(alpha + gamma + d[1/2 - 1/p0])} (1+j)^{-e}``
    with ``e = 2/q0`` (for ``0 <= gamma < d(1/p0 - 1/p1)``), and ``e = min(2/q0, 1/q1)`` on the
    threshold with ``q0 > q1``, where ``2/q0`` alone would leave the sequence inside the target
    space whenever ``q1 > q0/2``.
    ``unbounded-p``: level-0 entries ``(1+n)^{-e}`` with ``1/p0 < e < 1/p1`` (for ``p0 > p1``);
    the grid is a truncation of an unbounded grid and ``n`` runs over its level-0 points.
    """
    d = src.d
    alpha = dst.alpha
    gamma = src.alpha - dst.alpha
    a = CoeffSequence.zeros(grid)
    if kind == "gamma-negative":
        for j in range(grid.J + 1):
            a.levels[j][:] = 2.0 ** (-j * (d / 2 + alpha + gamma / 2))
    elif kind == "gamma-boundary":
        q0, q1 = src.q, dst.q
        e = 0.0 if math.isinf(q0) else 2.0 / q0
        if math.isclose(gamma, embedding_threshold(src.p, dst.p, d), abs_tol=_EQ_TOL) and not math.isinf(q1):
            # on the threshold only the fine index separates the spaces: need e <= 1/q1
            e = min(e, 1.0 / q1)
        for j in range(grid.J + 1):
            damp = (1.0 + j) ** -e
            a.levels[j][0] = 2.0 ** (-j * (alpha + gamma + d * (0.5 - 1.0 / src.p))) * damp
    elif kind == "unbounded-p":
        if not src.p > dst.p:
            raise ValueError("unbounded-p counterexample needs p0 > p1")
        e = 0.5 * (1.0 / src.p + 1.0 / dst.p)
        a.levels[0][:] = (1.0 + np.arange(grid.sizes[0])) ** -e
    else:
        raise ValueError(f"unknown counterexample kind {kind!r}")
    return a


def random_sequence(grid: MultiscaleGrid, rng: np.random.Generator, density: float = 1.0,
                    level_decay: float = 0.0, complex_values: bool = True) -> CoeffSequence:
    """Random sequence with level amplitudes ``2^{-j level_decay}`` and a fraction ``density`` of nonzeros."""
    levels = []
    for j, n in enumerate(grid.sizes):
        v = rng.standard_normal(n)
        if complex_values:
            v = v + 1j * rng.standard_normal(n)
        v = v * 2.0 ** (-j * level_decay)
        if density < 1.0:
            v = v * (rng.random(n) < density)
        levels.append(v)
    return CoeffSequence(grid, levels)
