"""Best n-term approximation in ``b^alpha_{p,q}`` and empirical rate fits.

For ``p = q`` the quasi-norm is a weighted ``l_p`` norm, so keeping the
``n`` entries of largest weighted magnitude ``2^{j(alpha + d(1/2-1/p))}|a|``
is optimal.  For ``q != p`` the same greedy choice only gives an upper bound
on the best ``n``-term error; curves record which case applies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .grid import MultiscaleGrid, build_dyadic_grid
from .seq import (BesovParams, CoeffSequence, adaptivity, admissible_tuple, embedding_exists,
                  embedding_threshold, quasi_norm)

__all__ = [
    "NTermResult",
    "greedy_nterm",
    "ErrorCurve",
    "error_curve",
    "RateFit",
    "rate_fit",
    "predicted_rate",
    "RateReport",
    "rate_experiment",
    "extremal_sequence",
    "diagram_rows",
    "diagram_export",
]


def _weighted(a: CoeffSequence, prm: BesovParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted magnitudes of all entries with their level and position."""
    w, lev, pos = [], [], []
    for j, v in enumerate(a.levels):
        w.append(2.0 ** (j * prm.weight_exponent) * np.abs(v))
        lev.append(np.full(len(v), j))
        pos.append(np.arange(len(v)))
    return np.concatenate(w), np.concatenate(lev), np.concatenate(pos)


def _ranking(a: CoeffSequence, prm: BesovParams):
    w, lev, pos = _weighted(a, prm)
    order = np.lexsort((pos, lev, -w))  # largest first, ties by (level, position)
    return w, lev[order], pos[order], order


@dataclass
class NTermResult:
    kept: list
    error: float
    exact: bool


def greedy_nterm(a: CoeffSequence, target: BesovParams, n: int) -> NTermResult:
    """Keep the ``n`` entries of largest weighted magnitude; error is the target quasi-norm of the rest.

    ``exact`` is ``True`` when ``p = q`` (the greedy error then equals the
    best ``n``-term error) and ``False`` when it is only an upper bound.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    w, lev, pos, _ = _ranking(a, target)
    n_eff = min(n, int(np.count_nonzero(w)))
    rest = a.copy()
    kept = []
    for j, i in zip(lev[:n_eff], pos[:n_eff]):
        rest.levels[j][i] = 0
        kept.append((int(j), int(i)))
    return NTermResult(kept, quasi_norm(rest, target), target.p == target.q)


@dataclass
class ErrorCurve:
    points: list
    target: BesovParams
    label: str = ""
    upper_bound: bool = False

    @property
    def n(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def errors(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=float)


def error_curve(a: CoeffSequence, target: BesovParams, schedule=None, label: str = "") -> ErrorCurve:
    """Greedy errors for each ``n`` in ``schedule`` (default: powers of two and the support size)."""
    w, lev, pos, _ = _ranking(a, target)
    nnz = int(np.count_nonzero(w))
    if schedule is None:
        schedule = sorted({0, nnz} | {2 ** i for i in range(int(math.log2(max(nnz, 1))) + 1)})
    schedule = sorted({int(n) for n in schedule})
    rest = a.copy()
    done = 0
    pts = []
    prev = math.inf
    for n in schedule:
        n_eff = min(n, nnz)
        for j, i in zip(lev[done:n_eff], pos[done:n_eff]):
            rest.levels[j][i] = 0
        done = max(done, n_eff)
        err = min(quasi_norm(rest, target), prev)
        pts.append((n, err))
        prev = err
    return ErrorCurve(pts, target, label, target.p != target.q)


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_min: int
    n_max: int


def rate_fit(curve: ErrorCurve, window: tuple | None = None) -> RateFit:
    """Least squares of ``log2 error`` on ``log2 n`` over a window of ``n``.

    The default window is the middle two quartiles of ``log n`` among the
    points with ``n >= 1`` and positive error.
    """
    n, e = curve.n, curve.errors
    ok = (n >= 1) & (e > 0)
    n, e = n[ok], e[ok]
    if len(n) < 2:
        raise ValueError("need at least two points with n >= 1 and positive error")
    if window is None:
        lo, hi = np.log2(n[0]), np.log2(n[-1])
        window = (2 ** (lo + 0.25 * (hi - lo)), 2 ** (lo + 0.75 * (hi - lo)))
    sel = (n >= window[0] - 1e-9) & (n <= window[1] + 1e-9)
    if sel.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two points")
    x, y = np.log2(n[sel]), np.log2(e[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, int(n[sel][0]), int(n[sel][-1]))


def predicted_rate(source: BesovParams, target: BesovParams) -> float:
    """Predicted exponent (a negative slope) of the best ``n``-term error.

    ``-gamma/d`` when ``gamma`` exceeds the embedding threshold, and
    ``-min(gamma/d, 1/q0 - 1/q1)`` on the threshold itself.
    """
    if not embedding_exists(source, target):
        raise ValueError("the source space does not embed into the target space")
    d = source.d
    gamma = source.alpha - target.alpha
    thr = embedding_threshold(source.p, target.p, d)
    if math.isclose(gamma, thr, abs_tol=1e-12):
        inv = (1.0 / source.q) - (0.0 if math.isinf(target.q) else 1.0 / target.q)
        return -min(gamma / d, inv)
    return -gamma / d


def extremal_sequence(grid: MultiscaleGrid, source: BesovParams, rng: np.random.Generator,
                      jitter: float = 0.5, complex_values: bool = False) -> CoeffSequence:
    """Random sequence with unit source norm spreading its mass evenly over levels and positions.

    Every entry of level ``j`` has modulus ``2^{-j w0} n_j^{-1/p0}`` times a
    random factor in ``[1 - jitter, 1]``, with ``w0`` the source weight
    exponent; phases are random.
    """
    levels = []
    for j, n in enumerate(grid.sizes):
        mag = 2.0 ** (-j * source.weight_exponent) * n ** (-1.0 / source.p)
        mag = mag * rng.uniform(1.0 - jitter, 1.0, n)
        if complex_values:
            ph = np.exp(2j * np.pi * rng.uniform(size=n))
        else:
            ph = rng.choice([-1.0, 1.0], size=n)
        levels.append(mag * ph)
    a = CoeffSequence(grid, levels)
    return a * (1.0 / quasi_norm(a, source))


@dataclass
class RateReport:
    slope: float
    predicted: float
    slopes: list
    within: bool
    tolerance: float = 0.15


def rate_experiment(source: BesovParams, target: BesovParams, J: int = 10, trials: int = 20,
                    seed: int = 0, tolerance: float = 0.15) -> RateReport:
    """Mean fitted slope of greedy errors over random extremal sequences on the dyadic grid of ``[0,1]^d``."""
    gamma = source.alpha - target.alpha
    if gamma < 0:
        raise ValueError("gamma < 0: the source space does not embed into the target space")
    pred = predicted_rate(source, target)
    grid = build_dyadic_grid(source.d, J)
    rng = np.random.default_rng(seed)
    total = sum(grid.sizes)
    schedule = sorted({int(round(x)) for x in np.geomspace(1, total, 40)})
    slopes = []
    for _ in range(trials):
        a = extremal_sequence(grid, source, rng)
        slopes.append(rate_fit(error_curve(a, target, schedule)).slope)
    s = float(np.mean(slopes))
    return RateReport(s, pred, slopes, abs(s - pred) <= tolerance, tolerance)


# ---------------------------------------------------------------------------
# DeVore-Triebel diagram


DIAGRAM_HEADER = ["kind", "label", "inv_p", "alpha", "q", "admissible", "on_adaptivity_line", "l2_anchor"]


def diagram_rows(params, d: int) -> list[list]:
    """Rows of the ``(1/p, alpha)`` diagram: parameter points, the adaptivity line and the admissibility boundary.

    The lines are sampled at the ``1/p`` values of the given points together
    with ``1/2``; with no points there are no rows.
    """
    params = list(params)
    rows = []
    for prm in params:
        inv_p = 1.0 / prm.p
        on_line = math.isclose(inv_p, prm.alpha / d + 0.5, abs_tol=1e-12)
        anchor = math.isclose(inv_p, 0.5) and prm.alpha == 0
        rows.append(["point", f"{prm.alpha:g},{prm.p:g},{prm.q:g}", inv_p, prm.alpha, prm.q,
                     int(admissible_tuple(prm.alpha, prm.p, prm.q, d)), int(on_line), int(anchor)])
    if params:
        xs = sorted({0.5} | {1.0 / prm.p for prm in params})
        for x in xs:
            a = d * (x - 0.5)
            if a >= 0:
                tau = adaptivity(a, d)
                rows.append(["adaptivity", f"tau={tau:g}", x, a, tau, 1, 1, int(a == 0)])
        for x in xs:
            rows.append(["admissibility", "boundary", x, d * max(0.0, x - 0.5), 2.0, 1,
                         int(x >= 0.5), int(math.isclose(x, 0.5))])
    return rows


def diagram_export(params, d: int, path=None) -> str:
    """CSV text of :func:`diagram_rows` (header only for an empty list); written to ``path`` if given."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(DIAGRAM_HEADER)
    for row in diagram_rows(params, d):
        wr.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
