"""Multiscale grids: per-level index sets of (position, type) pairs.

A multiscale grid ``nabla = (nabla_j)`` on a set ``Gamma`` stores, for every
level ``j``, finitely many index points ``xi = (y, t)`` with ``y`` in ``Gamma``
and a type tag ``t`` from a finite set.  Distances ignore the tag.  The
module checks the structural axioms empirically:

* (A1) ``nabla_j`` is a ``c1 2^-j`` net of ``Gamma``;
* (A2) at most a bounded number of points lie within ``c2 2^-j`` of any point;
* (A3) about ``2^{dj}`` points lie within distance ``c3`` of any point;
* (A4a) ``#nabla_j ~ 2^{dj}`` for bounded ``Gamma``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Decomposition, GeometryError, conformity_check, unit_cube

__all__ = [
    "IndexPoint",
    "GridLevel",
    "MultiscaleGrid",
    "DomainMismatchError",
    "pseudo_dist",
    "check_net",
    "check_separation",
    "check_dimension",
    "check_dimension_band",
    "cardinality_check",
    "build_dyadic_grid",
    "lift_grid",
    "layer_sum",
    "layer_sum_bound_check",
]

MERGE_TOL = 1e-9
_REL = 1e-12


class DomainMismatchError(ValueError):
    """Raised when comparing index points that live on different sets."""


@dataclass(frozen=True)
class IndexPoint:
    """An index ``(j, xi)`` with ``xi = (y, t)``."""

    j: int
    y: tuple
    t: Hashable
    domain: str = ""
    patch: int = -1
    local: tuple = ()


@dataclass(eq=False)
class GridLevel:
    """Arrays describing one level: ambient points, tag codes, patch ids, local coordinates."""

    points: np.ndarray
    tags: np.ndarray
    patch: np.ndarray
    local: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = len(self.points)
        self.tags = np.asarray(self.tags, dtype=int).reshape(n)
        self.patch = np.asarray(self.patch, dtype=int).reshape(n)
        local = np.asarray(self.local, dtype=float)
        width = local.shape[-1] if local.ndim == 2 else (local.size // n if n else self.points.shape[1])
        self.local = local.reshape(n, width)
        for a in (self.points, self.tags, self.patch, self.local):
            a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)


class MultiscaleGrid:
    """Finite truncation ``nabla_0, ..., nabla_J`` of a multiscale grid.

    Parameters
    ----------
    levels:
        One :class:`GridLevel` per level ``j = 0..J``.
    tagset:
        The finite tag set ``T``; ``GridLevel.tags`` hold indices into it.
    d:
        Dimension of ``Gamma``.
    c1, c2, c3:
        Net, separation and dimension constants.
    bounded:
        ``True`` for the (A4a) regime.  ``False`` marks a truncation of an
        unbounded grid (A4b); no infinite grid is ever materialized.
    dec:
        The decomposition backing ``Gamma`` (used for probe sampling).
    """

    def __init__(self, levels: Sequence[GridLevel], tagset: Sequence[Hashable], d: int,
                 c1: float, c2: float, c3: float, bounded: bool = True,
                 dec: Decomposition | None = None, domain: str | None = None):
        if d < 1:
            raise ValueError("dimension must be positive")
        if min(c1, c2, c3) <= 0:
            raise ValueError("axiom constants must be positive")
        self.levels = tuple(levels)
        self.tagset = tuple(tagset)
        self.d = int(d)
        self.c1, self.c2, self.c3 = float(c1), float(c2), float(c3)
        self.bounded = bool(bounded)
        self.dec = dec
        self.domain = domain if domain is not None else (dec.name if dec is not None else "")

    @property
    def J(self) -> int:
        return len(self.levels) - 1

    @property
    def sizes(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    @property
    def m(self) -> int:
        return self.levels[0].points.shape[1]

    def __len__(self) -> int:
        return sum(self.sizes)

    def point(self, j: int, idx: int) -> IndexPoint:
        lv = self.levels[j]
        return IndexPoint(j, tuple(lv.points[idx]), self.tagset[lv.tags[idx]], self.domain,
                          int(lv.patch[idx]), tuple(lv.local[idx]))

    def tree(self, j: int) -> cKDTree:
        return self._trees[j]

    @cached_property
    def _trees(self) -> list:
        return [cKDTree(lv.points) if len(lv) else None for lv in self.levels]

    def truncate(self, J: int) -> "MultiscaleGrid":
        if J > self.J:
            raise ValueError("cannot extend a grid by truncation")
        return MultiscaleGrid(self.levels[:J + 1], self.tagset, self.d, self.c1, self.c2, self.c3,
                              self.bounded, self.dec, self.domain)

    def with_constants(self, c1=None, c2=None, c3=None) -> "MultiscaleGrid":
        return MultiscaleGrid(self.levels, self.tagset, self.d, c1 or self.c1, c2 or self.c2,
                              c3 or self.c3, self.bounded, self.dec, self.domain)

    def with_level(self, j: int, level: GridLevel) -> "MultiscaleGrid":
        lv = list(self.levels)
        lv[j] = level
        return MultiscaleGrid(lv, self.tagset, self.d, self.c1, self.c2, self.c3,
                              self.bounded, self.dec, self.domain)

    def distances(self, j: int, y: np.ndarray) -> np.ndarray:
        """Chord distances from the ambient point ``y`` to all of ``nabla_j``."""
        return np.linalg.norm(self.levels[j].points - np.asarray(y, dtype=float), axis=1)

    def probes(self, j: int, density: int = 8) -> np.ndarray:
        """Dense probe points of ``Gamma``: per-patch lattices ``density`` times finer than level ``j``."""
        dec = self.dec if self.dec is not None else unit_cube(self.d)
        n = density * 2 ** j
        t = np.linspace(0.0, 1.0, n + 1)
        loc = np.array(list(itertools.product(t, repeat=self.d)))
        return np.concatenate([p(loc) for p in dec.patches])


def pseudo_dist(a: IndexPoint, b: IndexPoint) -> float:
    """Chord distance between the positions of ``a`` and ``b``; tags are ignored."""
    if a.domain != b.domain or len(a.y) != len(b.y):
        raise DomainMismatchError(f"points live on different sets: {a.domain!r} vs {b.domain!r}")
    return float(np.linalg.norm(np.subtract(a.y, b.y)))


# ---------------------------------------------------------------------------
# axiom checks


@dataclass
class NetReport:
    ok: bool
    worst_gap: float
    bound: float
    witness: list = field(default_factory=list)


@dataclass
class SeparationReport:
    ok: bool
    max_count: int
    cap: int
    witness: int = -1


@dataclass
class DimensionReport:
    count: int
    ratio: float


@dataclass
class CardinalityReport:
    ok: bool
    counts: list
    ratios: list


def _level_check(g: MultiscaleGrid, j: int):
    if not 0 <= j <= g.J:
        raise ValueError(f"level {j} outside stored levels 0..{g.J}")


def check_net(g: MultiscaleGrid, j: int, density: int = 8) -> NetReport:
    """(A1): every probe point lies within ``c1 2^-j`` of ``nabla_j``."""
    _level_check(g, j)
    bound = g.c1 * 2.0 ** -j
    if len(g.levels[j]) == 0:
        return NetReport(False, math.inf, bound)
    probes = g.probes(j, density)
    gap, _ = g.tree(j).query(probes)
    w = int(np.argmax(gap))
    worst = float(gap[w])
    return NetReport(worst <= bound * (1 + _REL), worst, bound, probes[w].tolist())


def check_separation(g: MultiscaleGrid, j: int, cap: int | None = None) -> SeparationReport:
    """(A2): the number of points within ``c2 2^-j`` of any point stays below ``cap``.

    The default cap is ``|T| * 3^d``.
    """
    _level_check(g, j)
    cap = len(g.tagset) * 3 ** g.d if cap is None else int(cap)
    lv = g.levels[j]
    if len(lv) == 0:
        return SeparationReport(True, 0, cap)
    r = g.c2 * 2.0 ** -j * (1 + _REL)
    counts = g.tree(j).query_ball_point(lv.points, r, return_length=True)
    w = int(np.argmax(counts))
    return SeparationReport(int(counts[w]) <= cap, int(counts[w]), cap, w)


def check_dimension(g: MultiscaleGrid, j: int, max_centers: int = 256, seed: int = 0) -> DimensionReport:
    """(A3): ``count = max_xi #{xi' : dist <= c3}`` and ``count / 2^{dj}``.

    Centers are subsampled (deterministically) on large levels.
    """
    _level_check(g, j)
    lv = g.levels[j]
    if len(lv) == 0:
        return DimensionReport(0, 0.0)
    centers = lv.points
    if len(centers) > max_centers:
        rng = np.random.default_rng(seed)
        centers = centers[rng.choice(len(centers), max_centers, replace=False)]
    counts = g.tree(j).query_ball_point(centers, g.c3 * (1 + _REL), return_length=True)
    count = int(np.max(counts))
    return DimensionReport(count, count / 2.0 ** (g.d * j))


def check_dimension_band(g: MultiscaleGrid, band: float = 16.0, levels=None) -> tuple[bool, list]:
    """(A3) across levels: the ratios stay within a factor ``band`` of each other."""
    levels = range(g.J + 1) if levels is None else levels
    ratios = [check_dimension(g, j).ratio for j in levels]
    ok = min(ratios) > 0 and max(ratios) / min(ratios) <= band
    return ok, ratios


def cardinality_check(g: MultiscaleGrid, band: float = 16.0) -> CardinalityReport:
    """(A4a): ``#nabla_j`` and ``#nabla_j / 2^{dj}`` per level.

    For bounded grids the ratios must stay within a factor ``band``; for
    truncations of unbounded grids growth is expected and only reported.
    """
    if len(g) == 0:
        raise ValueError("empty grid")
    counts = g.sizes
    ratios = [c / 2.0 ** (g.d * j) for j, c in enumerate(counts)]
    if g.bounded:
        ok = min(ratios) > 0 and max(ratios) / min(ratios) <= band
    else:
        ok = True
    return CardinalityReport(ok, counts, ratios)


# ---------------------------------------------------------------------------
# constructions


def _lattice(d: int, j: int, extent: int = 1) -> np.ndarray:
    t = np.arange(extent * 2 ** j + 1) / 2.0 ** j
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _cross_tags(points, patch, local, ntags) -> GridLevel:
    n = len(points)
    return GridLevel(np.repeat(points, ntags, axis=0), np.tile(np.arange(ntags), n),
                     np.repeat(patch, ntags), np.repeat(local, ntags, axis=0))


def build_dyadic_grid(d: int, J: int, tags: Sequence[Hashable] = (0,), extent: int = 1) -> MultiscaleGrid:
    """Dyadic lattices ``{m 2^-j}`` on ``[0, extent]^d`` crossed with ``tags``.

    Constants are ``(sqrt(d), 1/2, 1)``.  ``extent > 1`` marks a truncation of
    an unbounded grid (``bounded=False``).
    """
    if J < 0:
        raise ValueError("J must be nonnegative")
    if d < 1:
        raise ValueError("d must be positive")
    tags = tuple(tags)
    if not tags:
        raise ValueError("tag set must be nonempty")
    levels = []
    for j in range(J + 1):
        pts = _lattice(d, j, extent)
        levels.append(_cross_tags(pts, np.zeros(len(pts), int), pts / extent, len(tags)))
    dec = unit_cube(d, extent)
    return MultiscaleGrid(levels, tags, d, math.sqrt(d), 0.5, 1.0, bounded=extent == 1, dec=dec)


def _patch_constants(dec: Decomposition, n: int = 5) -> tuple[float, float]:
    """Largest and smallest singular values of the patch Jacobians (sampled)."""
    t = np.linspace(0.0, 1.0, n)
    x = np.array(list(itertools.product(t, repeat=dec.d)))
    hi, lo = 0.0, math.inf
    for p in dec.patches:
        s = np.linalg.svd(p.jacobian(x), compute_uv=False)
        hi, lo = max(hi, s.max()), min(lo, s.min())
    return hi, lo


def lift_grid(dec: Decomposition, J: int, tags: Sequence[Hashable] = (0,)) -> MultiscaleGrid:
    """Per-patch dyadic lattices mapped through the patches, interface duplicates merged.

    Points closer than ``1e-9`` are merged, keeping the lowest patch index.
    The metric is the ambient chord distance.
    """
    if J < 0:
        raise ValueError("J must be nonnegative")
    report = conformity_check(dec)
    if not report.ok:
        raise GeometryError(f"non-conforming decomposition {dec.name!r}")
    tags = tuple(tags)
    levels = []
    for j in range(J + 1):
        loc = _lattice(dec.d, j)
        pts, pid, lc = [], [], []
        for p in dec.patches:
            y = p(loc)
            if pts:
                acc = np.concatenate(pts)
                dist, _ = cKDTree(acc).query(y, distance_upper_bound=MERGE_TOL)
                keep = ~np.isfinite(dist)
            else:
                keep = np.ones(len(y), bool)
            pts.append(y[keep])
            pid.append(np.full(keep.sum(), p.id))
            lc.append(loc[keep])
        levels.append(_cross_tags(np.concatenate(pts), np.concatenate(pid), np.concatenate(lc), len(tags)))
    hi, lo = _patch_constants(dec)
    return MultiscaleGrid(levels, tags, dec.d, math.sqrt(dec.d) * hi, 0.5 * lo, 1.0, True, dec)


# ---------------------------------------------------------------------------
# layer sums


def layer_sum(g: MultiscaleGrid, j: int, k: int, s: float, x) -> float:
    """``sum_{xi in nabla_j} [1 + 2^k dist(xi, x)]^{-s}`` for ``s > d``."""
    if s <= g.d:
        raise ValueError("layer sums need s > d")
    y = x.y if isinstance(x, IndexPoint) else x
    dist = g.distances(j, y)
    return float(np.sum((1.0 + 2.0 ** k * dist) ** -s))


@dataclass
class LayerSumReport:
    """``table[(j, k)]`` holds the largest normalized sum over the probes."""

    C: float
    witness: tuple
    table: dict = field(default_factory=dict)

    def constant(self, max_level: int) -> float:
        """Fitted ``C`` restricted to ``j, k <= max_level``."""
        return max(v for (j, k), v in self.table.items() if j <= max_level and k <= max_level)


def _default_layer_probes(g: MultiscaleGrid, n_random: int = 16, seed: int = 0) -> np.ndarray:
    coarse = g.levels[min(2, g.J)].points
    dec = g.dec if g.dec is not None else unit_cube(g.d)
    rng = np.random.default_rng(seed)
    pid = rng.integers(0, dec.N, n_random)
    loc = rng.random((n_random, dec.d))
    rand = np.stack([dec.patches[i](loc[r:r + 1])[0] for r, i in enumerate(pid)])
    return np.unique(np.concatenate([coarse, rand]), axis=0)


def layer_sum_bound_check(g: MultiscaleGrid, s: float, max_level: int | None = None,
                          probes: np.ndarray | None = None) -> LayerSumReport:
    """Smallest ``C`` with ``sum <= C max{1, 2^{(j-k)s}}`` over probed ``(j, k, x)``.

    Probes default to the level-2 points plus 16 seeded random points of ``Gamma``.
    """
    if s <= g.d:
        raise ValueError("layer sums need s > d")
    L = g.J if max_level is None else min(max_level, g.J)
    probes = _default_layer_probes(g) if probes is None else np.atleast_2d(probes)
    best, witness, table = 0.0, (0, 0, 0), {}
    for j in range(L + 1):
        pts = g.levels[j].points
        for xi, y in enumerate(probes):
            dist = np.linalg.norm(pts - y, axis=1)
            for k in range(L + 1):
                val = np.sum((1.0 + 2.0 ** k * dist) ** -s) / max(1.0, 2.0 ** ((j - k) * s))
                key = (j, k)
                table[key] = max(table.get(key, 0.0), float(val))
                if val > best:
                    best, witness = float(val), (j, k, xi)
    return LayerSumReport(best, witness, table)
