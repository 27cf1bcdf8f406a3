"""Patchwise smooth manifolds built from parametrized unit cubes.

A :class:`Decomposition` stores patch parametrizations
``kappa_i : [0,1]^d -> R^m`` together with the interfaces between them.
Each interface carries a signed coordinate permutation ``pi`` such that
``kappa_j(pi(x)) == kappa_i(x)`` for every ``x`` on the shared face of
patch ``i``.  Signed permutations (coordinate permutations composed with
reflections ``x_k -> 1 - x_k``) are needed because plain permutations
cannot conform a closed polyhedral surface.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Patch",
    "Interface",
    "Decomposition",
    "PatchFunction",
    "ConformityReport",
    "gauss_legendre_cube",
    "signed_permutations",
    "is_plain_permutation",
    "GeometryError",
    "apply_signed_perm",
    "find_interfaces",
    "conformity_check",
    "inner_product",
    "pullback",
    "pushforward",
    "builtin_manifolds",
    "unit_cube",
    "MANIFOLD_NAMES",
]

CONFORMITY_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for invalid or non-conforming decompositions."""


# ---------------------------------------------------------------------------
# patches


def _tensor_monomials(x: np.ndarray, degree: int) -> np.ndarray:
    """Tensor monomials x^e for all multi-indices e in {0..degree}^d, shape (n, (degree+1)^d)."""
    n, d = x.shape
    cols = []
    for e in itertools.product(range(degree + 1), repeat=d):
        cols.append(np.prod(x ** np.array(e), axis=1))
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class Patch:
    """A parametrization ``kappa: [0,1]^d -> R^m``.

    ``kind`` is one of ``"affine"`` (``coeffs`` is the ``(m, d+1)`` matrix
    ``[b | A]`` with ``kappa(x) = b + A x``), ``"polynomial"`` (``coeffs`` has
    shape ``(m, (deg+1)^d)`` over tensor monomials), or ``"function"`` for an
    arbitrary callable (not serializable).
    """

    id: int
    kind: str
    d: int
    m: int
    coeffs: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("affine", "polynomial", "function"):
            raise GeometryError(f"unknown patch kind {self.kind!r}")
        if self.kind == "affine":
            c = np.asarray(self.coeffs, dtype=float)
            if c.shape != (self.m, self.d + 1):
                raise GeometryError(f"affine coeffs must have shape {(self.m, self.d + 1)}")
            object.__setattr__(self, "coeffs", c)
        elif self.kind == "polynomial":
            c = np.asarray(self.coeffs, dtype=float)
            deg = round(c.shape[1] ** (1.0 / self.d)) - 1
            if c.shape[0] != self.m or (deg + 1) ** self.d != c.shape[1]:
                raise GeometryError("polynomial coeffs must have shape (m, (deg+1)^d)")
            object.__setattr__(self, "coeffs", c)
            object.__setattr__(self, "degree", deg)
        elif self.func is None:
            raise GeometryError("function patch needs a callable")

    @classmethod
    def affine(cls, id: int, origin, axes) -> "Patch":
        """Affine patch ``x -> origin + sum_k x_k * axes[k]``."""
        origin = np.asarray(origin, dtype=float)
        A = np.asarray(axes, dtype=float).reshape(-1, origin.size).T
        return cls(id, "affine", A.shape[1], origin.size, np.column_stack([origin, A]))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise GeometryError(f"expected local points of dimension {self.d}")
        if self.kind == "affine":
            return self.coeffs[:, 0] + x @ self.coeffs[:, 1:].T
        if self.kind == "polynomial":
            return _tensor_monomials(x, self.degree) @ self.coeffs.T
        return np.atleast_2d(np.asarray(self.func(x), dtype=float)).reshape(len(x), self.m)

    def jacobian(self, x, h: float = 1e-6) -> np.ndarray:
        """Jacobian ``(n, m, d)``; exact for affine patches, central differences otherwise."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "affine":
            return np.broadcast_to(self.coeffs[:, 1:], (len(x), self.m, self.d)).copy()
        cols = []
        for k in range(self.d):
            e = np.zeros(self.d)
            e[k] = h
            cols.append((self(x + e) - self(x - e)) / (2 * h))
        return np.stack(cols, axis=2)

    def inverse(self, y, tol: float = 1e-12, maxiter: int = 50) -> tuple[np.ndarray, np.ndarray]:
        """Local coordinates of ambient points ``y`` and the residual distance.

        Affine patches use a least-squares solve; other kinds use Gauss-Newton
        started from the affine interpolant of the cube corners.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.kind == "affine":
            A = self.coeffs[:, 1:]
            x = np.linalg.lstsq(A, (y - self.coeffs[:, 0]).T, rcond=None)[0].T
        else:
            base = self(np.zeros((1, self.d)))[0]
            A = np.stack([self(np.eye(self.d)[k:k + 1])[0] - base for k in range(self.d)], axis=1)
            x = np.linalg.lstsq(A, (y - base).T, rcond=None)[0].T
            for _ in range(maxiter):
                r = self(x) - y
                Jm = self.jacobian(x)
                step = np.stack([np.linalg.lstsq(Jm[i], r[i], rcond=None)[0] for i in range(len(x))])
                x = x - step
                if np.max(np.abs(step), initial=0.0) < tol:
                    break
        res = np.linalg.norm(self(x) - y, axis=1)
        return x, res

    def to_json(self) -> dict:
        if self.kind == "function":
            raise GeometryError("function patches cannot be serialized")
        return {"id": self.id, "kind": self.kind, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj: dict, d: int, m: int) -> "Patch":
        return cls(int(obj["id"]), obj["kind"], d, m, np.asarray(obj["coeffs"], dtype=float))


# ---------------------------------------------------------------------------
# signed permutations and interfaces

# A signed permutation is a tuple of (source_axis, flip) pairs, one per output
# coordinate: pi(x)_k = x[src_k] if not flip_k else 1 - x[src_k].
SignedPerm = tuple


@lru_cache(maxsize=None)
def signed_permutations(d: int) -> tuple:
    """All ``2^d d!`` signed permutations of ``[0,1]^d``, identity first."""
    out = []
    for perm in itertools.permutations(range(d)):
        for flips in itertools.product((0, 1), repeat=d):
            out.append(tuple(zip(perm, flips)))
    return tuple(out)


def apply_signed_perm(pi: SignedPerm, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = [1.0 - x[:, a] if f else x[:, a] for a, f in pi]
    return np.stack(cols, axis=1)


def is_plain_permutation(pi: SignedPerm) -> bool:
    return all(f == 0 for _, f in pi)


@dataclass(frozen=True)
class Interface:
    """Shared face between patches ``i`` and ``j``; faces are ``(axis, side)``."""

    i: int
    j: int
    face_i: tuple
    face_j: tuple
    perm: SignedPerm

    def to_json(self) -> dict:
        return {
            "i": self.i,
            "j": self.j,
            "face_i": list(self.face_i),
            "face_j": list(self.face_j),
            "perm": [[int(a), int(f)] for a, f in self.perm],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Interface":
        return cls(
            int(obj["i"]),
            int(obj["j"]),
            tuple(int(v) for v in obj["face_i"]),
            tuple(int(v) for v in obj["face_j"]),
            tuple((int(a), int(f)) for a, f in obj["perm"]),
        )


def _face_samples(d: int, face: tuple, n: int) -> np.ndarray:
    """Tensor sample grid with ``n`` points per free axis on the face ``(axis, side)``."""
    axis, side = face
    t = np.linspace(0.0, 1.0, n)
    if d == 1:
        return np.array([[float(side)]])
    free = [np.asarray(c) for c in itertools.product(t, repeat=d - 1)]
    pts = np.zeros((len(free), d))
    others = [k for k in range(d) if k != axis]
    pts[:, others] = np.array(free)
    pts[:, axis] = side
    return pts


def _faces(d: int):
    return [(a, s) for a in range(d) for s in (0, 1)]


def find_interfaces(patches: Sequence[Patch], n: int = 9, tol: float = CONFORMITY_TOL) -> list[Interface]:
    """Detect codimension-one interfaces and the signed permutation matching each.

    Prefers plain permutations when several signed permutations match.
    """
    out = []
    for pa, pb in itertools.combinations(patches, 2):
        d = pa.d
        for fi in _faces(d):
            xi = _face_samples(d, fi, n)
            yi = pa(xi)
            for fj in _faces(d):
                yj = pb(_face_samples(d, fj, n))
                dmat = np.linalg.norm(yi[:, None, :] - yj[None, :, :], axis=2)
                if dmat.min(axis=1).max() > tol or dmat.min(axis=0).max() > tol:
                    continue
                cands = sorted(signed_permutations(d), key=lambda p: not is_plain_permutation(p))
                for pi in cands:
                    if np.max(np.linalg.norm(pb(apply_signed_perm(pi, xi)) - yi, axis=1)) <= tol:
                        out.append(Interface(pa.id, pb.id, fi, fj, pi))
                        break
                else:
                    raise GeometryError(f"no signed permutation matches patches {pa.id},{pb.id}")
    return out


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Essentially disjoint patches with conforming interfaces."""

    patches: tuple
    interfaces: tuple
    d: int
    m: int
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        for k, p in enumerate(self.patches):
            if p.id != k:
                raise GeometryError("patch ids must be 0..N-1 in order")
            if p.d != self.d or p.m != self.m:
                raise GeometryError("patch dimensions disagree with the decomposition")

    @property
    def N(self) -> int:
        return len(self.patches)

    def locate(self, y, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Patch index (lowest matching) and local coordinates for ambient points."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        pid = np.full(len(y), -1)
        loc = np.full((len(y), self.d), np.nan)
        for p in self.patches:
            x, res = p.inverse(y)
            inside = (res <= tol) & np.all((x >= -tol) & (x <= 1 + tol), axis=1) & (pid < 0)
            pid[inside] = p.id
            loc[inside] = np.clip(x[inside], 0.0, 1.0)
        return pid, loc

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "m": self.m,
            "patches": [p.to_json() for p in self.patches],
            "interfaces": [f.to_json() for f in self.interfaces],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Decomposition":
        d, m = int(obj["d"]), int(obj["m"])
        patches = [Patch.from_json(p, d, m) for p in obj["patches"]]
        faces = [Interface.from_json(f) for f in obj["interfaces"]]
        return cls(tuple(patches), tuple(faces), d, m, obj.get("name", "custom"))


@dataclass
class InterfaceReport:
    i: int
    j: int
    deviation: float
    witness: list
    ok: bool


@dataclass
class ConformityReport:
    ok: bool
    interfaces: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)
    undeclared: list = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        return max((r.deviation for r in self.interfaces), default=0.0)


def conformity_check(dec: Decomposition, samples: int = 64, tol: float = CONFORMITY_TOL,
                     interior: int = 6) -> ConformityReport:
    """Sampled check of ``kappa_j(pi(x)) == kappa_i(x)`` on every declared interface.

    Also samples patch interiors to detect overlapping interiors and looks
    for shared faces that were not declared.
    """
    reports = []
    for f in dec.interfaces:
        pa, pb = dec.patches[f.i], dec.patches[f.j]
        x = _face_samples(dec.d, f.face_i, samples if dec.d == 2 else max(2, int(round(samples ** (1 / max(dec.d - 1, 1))))))
        dev = np.linalg.norm(pb(apply_signed_perm(f.perm, x)) - pa(x), axis=1)
        w = int(np.argmax(dev))
        reports.append(InterfaceReport(f.i, f.j, float(dev[w]), x[w].tolist(), bool(dev[w] <= tol)))

    overlaps = []
    g = (np.arange(interior) + 0.5) / interior
    xin = np.array(list(itertools.product(g, repeat=dec.d)))
    for pa in dec.patches:
        y = pa(xin)
        for pb in dec.patches:
            if pb.id == pa.id:
                continue
            x, res = pb.inverse(y)
            inside = (res <= tol) & np.all((x > tol) & (x < 1 - tol), axis=1)
            if inside.any():
                overlaps.append({"i": pa.id, "j": pb.id, "witness": y[np.argmax(inside)].tolist()})

    declared = {(f.i, f.j, tuple(f.face_i), tuple(f.face_j)) for f in dec.interfaces}
    declared |= {(f.j, f.i, tuple(f.face_j), tuple(f.face_i)) for f in dec.interfaces}
    undeclared = []
    try:
        found = find_interfaces(dec.patches, tol=tol)
    except GeometryError:
        found = []
    for f in found:
        if (f.i, f.j, tuple(f.face_i), tuple(f.face_j)) not in declared:
            undeclared.append({"i": f.i, "j": f.j, "face_i": list(f.face_i), "face_j": list(f.face_j)})
    ok = all(r.ok for r in reports) and not overlaps and not undeclared
    return ConformityReport(ok, reports, overlaps, undeclared)


# ---------------------------------------------------------------------------
# functions on decompositions and the patchwise inner product


@lru_cache(maxsize=None)
def _gl_1d(order: int, cells: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    nodes = np.concatenate([(c + x) / cells for c in range(cells)])
    weights = np.tile(w / cells, cells)
    return nodes, weights


def gauss_legendre_cube(d: int, order: int, cells: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Tensor (composite) Gauss-Legendre nodes ``(n, d)`` and weights on ``[0,1]^d``."""
    x, w = _gl_1d(order, cells)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


class PatchFunction:
    """A function on a decomposition given patchwise as ``f o kappa_i``.

    ``local`` is a list with one callable per patch mapping local points
    ``(n, d)`` to values ``(n,)``.  Alternatively ``samples`` holds values at
    the tensor Gauss-Legendre nodes of order ``order`` (one array per patch).
    """

    def __init__(self, dec: Decomposition, local=None, samples=None, order: int | None = None):
        if (local is None) == (samples is None):
            raise ValueError("give exactly one of local callables or quadrature samples")
        self.dec = dec
        if local is not None:
            if callable(local):
                local = [local] * dec.N
            if len(local) != dec.N:
                raise ValueError("need one local callable per patch")
            self.local = list(local)
            self.samples = None
            self.order = None
        else:
            if order is None:
                raise ValueError("quadrature samples need their Gauss-Legendre order")
            n = order ** dec.d
            self.samples = [np.asarray(s).reshape(n) for s in samples]
            self.local = None
            self.order = order

    def on_patch(self, i: int, x: np.ndarray) -> np.ndarray:
        if self.local is None:
            raise ValueError("sample-backed PatchFunction can only be evaluated at its nodes")
        x = np.atleast_2d(x)
        v = np.asarray(self.local[i](x))
        return np.broadcast_to(v, (len(x),)) if v.ndim == 0 else v.reshape(len(x))

    def quad_values(self, i: int, order: int, cells: int = 1) -> np.ndarray:
        if self.samples is not None:
            if order != self.order or cells != 1:
                raise ValueError("sample-backed PatchFunction is tied to its own quadrature rule")
            return self.samples[i]
        nodes, _ = gauss_legendre_cube(self.dec.d, order, cells)
        return self.on_patch(i, nodes)

    @classmethod
    def constant(cls, dec: Decomposition, c: complex = 1.0) -> "PatchFunction":
        return cls(dec, [lambda x, c=c: np.full(len(x), c)] * dec.N)

    def __add__(self, other: "PatchFunction") -> "PatchFunction":
        return PatchFunction(self.dec, [lambda x, i=i: self.on_patch(i, x) + other.on_patch(i, x)
                                        for i in range(self.dec.N)])

    def __rmul__(self, c) -> "PatchFunction":
        return PatchFunction(self.dec, [lambda x, i=i: c * self.on_patch(i, x) for i in range(self.dec.N)])


def inner_product(f: PatchFunction, g: PatchFunction, dec: Decomposition | None = None,
                  quad_order: int = 12, cells: int = 1) -> complex:
    """Patchwise product ``sum_i <f o kappa_i, g o kappa_i>`` on the unit cube.

    There is deliberately no surface Jacobian.  The second argument is
    conjugated.
    """
    dec = dec or f.dec
    _, w = gauss_legendre_cube(dec.d, quad_order, cells)
    total = 0.0 + 0.0j
    for i in range(dec.N):
        total += np.sum(w * f.quad_values(i, quad_order, cells) * np.conj(g.quad_values(i, quad_order, cells)))
    return complex(total)


def pullback(f: Callable[[np.ndarray], np.ndarray], dec: Decomposition) -> PatchFunction:
    """Compose an ambient function ``f: (n, m) -> (n,)`` with every patch map."""
    return PatchFunction(dec, [lambda x, p=p: np.asarray(f(p(x))).reshape(len(np.atleast_2d(x)))
                               for p in dec.patches])


def pushforward(local: Callable[[np.ndarray], np.ndarray], patch: Patch,
                tol: float = 1e-9) -> Callable[[np.ndarray], np.ndarray]:
    """Ambient function ``y -> local(kappa^{-1}(y))``; ``nan`` off the patch."""

    def f(y):
        x, res = patch.inverse(y)
        out = np.asarray(local(np.clip(x, 0.0, 1.0)), dtype=complex).reshape(len(x))
        bad = (res > tol) | np.any((x < -tol) | (x > 1 + tol), axis=1)
        out[bad] = np.nan
        return out if np.iscomplexobj(out) and np.any(out.imag) else out.real

    return f


# ---------------------------------------------------------------------------
# catalog


def _decomposition(name: str, patches: list[Patch]) -> Decomposition:
    return Decomposition(tuple(patches), tuple(find_interfaces(patches)), patches[0].d, patches[0].m, name)


def unit_cube(d: int, extent: float = 1.0) -> Decomposition:
    """The cube ``[0, extent]^d`` as a single affine patch."""
    patch = Patch.affine(0, np.zeros(d), extent * np.eye(d))
    return Decomposition((patch,), (), d, d, "unit-cube" if extent == 1.0 else f"cube-{extent:g}")


def _interval() -> Decomposition:
    return _decomposition("interval", [Patch.affine(0, [0.0], [[1.0]])])


def _square2() -> Decomposition:
    # The second square is reflected so the shared edge matches with the identity.
    return _decomposition("square2", [
        Patch.affine(0, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
        Patch.affine(1, [2.0, 0.0], [[-1.0, 0.0], [0.0, 1.0]]),
    ])


def _cube_surface() -> Decomposition:
    patches = []
    for a in range(3):
        b, c = [k for k in range(3) if k != a]
        for s in (0.0, 1.0):
            o = np.zeros(3)
            o[a] = s
            patches.append(Patch.affine(len(patches), o, [np.eye(3)[b], np.eye(3)[c]]))
    return _decomposition("cube-surface", patches)


def _fichera_surface() -> Decomposition:
    """Surface of [-1,1]^3 minus [0,1]^3 split into 24 unit squares."""
    patches = []
    for a in range(3):
        b, c = [k for k in range(3) if k != a]
        for s in (-1.0, 1.0):
            for lb in (-1.0, 0.0):
                for lc in (-1.0, 0.0):
                    if s > 0 and lb == 0.0 and lc == 0.0:
                        continue  # removed octant
                    o = np.zeros(3)
                    o[a], o[b], o[c] = s, lb, lc
                    patches.append(Patch.affine(len(patches), o, [np.eye(3)[b], np.eye(3)[c]]))
        o = np.zeros(3)
        patches.append(Patch.affine(len(patches), o, [np.eye(3)[b], np.eye(3)[c]]))
    return _decomposition("fichera-surface", patches)


_CATALOG = {
    "interval": _interval,
    "square2": _square2,
    "cube-surface": _cube_surface,
    "fichera-surface": _fichera_surface,
}
MANIFOLD_NAMES = tuple(_CATALOG)


@lru_cache(maxsize=None)
def builtin_manifolds(name: str) -> Decomposition:
    """Catalog decompositions: interval, square2, cube-surface, fichera-surface."""
    try:
        return _CATALOG[name]()
    except KeyError:
        raise GeometryError(f"unknown manifold {name!r}; choose from {', '.join(MANIFOLD_NAMES)}") from None
