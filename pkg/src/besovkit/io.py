"""Persistence: deterministic JSON, grid/sequence/matrix schemas and grid references.

Floats are written with 17 significant digits, so every value survives a
write/read cycle bit for bit, and repeated runs give byte-identical files.
Non-finite floats are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.

Grid references (``grid_ref``) are short generator strings, or a path to a
grid JSON file:

* ``dyadic:d=1,J=6`` (optional ``tags=2``, ``extent=1``)
* ``manifold:cube-surface,J=4`` (lifted dyadic grid, optional ``tags``)
* ``wavelet:interval,J=6,D=2,Dt=2`` (the index grid of a spline system)
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .admat import ScaleMatrix
from .geometry import MANIFOLD_NAMES, Decomposition, builtin_manifolds, unit_cube
from .grid import GridLevel, MultiscaleGrid, build_dyadic_grid, lift_grid
from .seq import CoeffSequence

__all__ = [
    "dumps",
    "write_json",
    "read_json",
    "resolve_grid",
    "grid_to_json",
    "grid_from_json",
    "seq_to_json",
    "seq_from_json",
    "write_matrix",
    "read_matrix",
    "manifold_from_json",
]


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent: int | None = 1, _level: int = 0) -> str:
    """JSON text with ``.17g`` floats and sorted keys."""
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + dumps(v, indent, _level + 1) for k, v in sorted(obj.items())]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(not isinstance(v, (list, tuple, dict)) for v in obj)
        if flat or indent is None:
            return "[" + ", ".join(dumps(v, None, 0) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(dumps(v, indent, _level + 1) for v in obj) + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    return json.dumps(str(obj))


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def _restore(obj):
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def read_json(path):
    with open(path) as fh:
        return _restore(json.load(fh))


def _parse_opts(text: str) -> tuple[list, dict]:
    pos, opts = [], {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        if "=" in part:
            k, v = part.split("=", 1)
            opts[k.strip()] = v.strip()
        else:
            pos.append(part)
    return pos, opts


def resolve_grid(ref: str, base: str | os.PathLike | None = None) -> MultiscaleGrid:
    """Grid for a reference string or a grid JSON path (relative paths resolve against ``base``)."""
    kind, sep, rest = ref.partition(":")
    if sep and kind in ("dyadic", "manifold", "wavelet"):
        pos, opts = _parse_opts(rest)
        try:
            J = int(opts["J"])
            if kind == "dyadic":
                ntags = int(opts.get("tags", 1))
                return build_dyadic_grid(int(opts.get("d", 1)), J, tuple(range(ntags)), int(opts.get("extent", 1)))
            if kind == "manifold":
                ntags = int(opts.get("tags", 1))
                return lift_grid(builtin_manifolds(pos[0]), J, tuple(range(ntags)))
            from .wavelet import WaveletSystem, build_univariate
            uni = build_univariate(int(opts.get("D", 1)), int(opts.get("Dt", opts.get("D", 1))))
            return WaveletSystem(uni, pos[0], J).grid
        except (KeyError, IndexError) as exc:
            raise ValueError(f"incomplete grid reference {ref!r}") from exc
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = Path(base) / path
    return grid_from_json(read_json(path))


def grid_to_json(g: MultiscaleGrid) -> dict:
    levels = []
    for j, lev in enumerate(g.levels):
        pts = []
        for i in range(len(lev)):
            item = {"j": j, "y": lev.points[i].tolist(), "t": int(lev.tags[i])}
            if lev.patch[i] >= 0:
                item["patch"] = int(lev.patch[i])
                item["local"] = lev.local[i].tolist()
            pts.append(item)
        levels.append(pts)
    return {"schema": "besovkit.grid/1", "d": g.d, "bounded": g.bounded, "domain": g.domain,
            "constants": {"c1": g.c1, "c2": g.c2, "c3": g.c3},
            "tagset": [list(t) if isinstance(t, tuple) else t for t in g.tagset], "levels": levels}


def grid_from_json(obj: dict) -> MultiscaleGrid:
    try:
        d = int(obj["d"])
        c = obj["constants"]
        levels = []
        for j, pts in enumerate(obj["levels"]):
            if any(int(p["j"]) != j for p in pts):
                raise ValueError(f"point with wrong level in slot {j}")
            y = np.array([p["y"] for p in pts], float).reshape(len(pts), -1)
            t = np.array([p.get("t", 0) for p in pts], int)
            patch = np.array([p.get("patch", -1) for p in pts], int)
            local = np.array([p.get("local", p["y"]) for p in pts], float).reshape(len(pts), -1)
            levels.append(GridLevel(y, t, patch, local))
        ntags = int(max((int(l.tags.max()) + 1 for l in levels if len(l)), default=1))
        tagset = obj.get("tagset") or list(range(ntags))
        tagset = [tuple(t) if isinstance(t, list) else t for t in tagset]
        domain = obj.get("domain", "")
        dec = None
        if domain in MANIFOLD_NAMES:
            dec = builtin_manifolds(domain)
        elif domain.startswith("cube-"):
            dec = unit_cube(d, float(domain[5:]))
        return MultiscaleGrid(levels, tagset, d, float(c["c1"]), float(c["c2"]), float(c["c3"]),
                              bool(obj.get("bounded", True)), dec, domain)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed grid JSON: {exc}") from exc


def seq_to_json(a: CoeffSequence, grid_ref: str, seed: int | None = None) -> dict:
    entries = [{"j": j, "xi_index": i, "re": float(np.real(v)), "im": float(np.imag(v))}
               for j, i, v in a.entries()]
    out = {"schema": "besovkit.seq/1", "grid_ref": grid_ref, "sizes": a.grid.sizes, "entries": entries}
    if seed is not None:
        out["seed"] = int(seed)
    return out


def seq_from_json(obj: dict, base=None, grid: MultiscaleGrid | None = None) -> CoeffSequence:
    try:
        g = grid if grid is not None else resolve_grid(obj["grid_ref"], base)
        if "sizes" in obj and list(obj["sizes"]) != g.sizes:
            raise ValueError("sequence sizes do not match its grid")
        triples = [(int(e["j"]), int(e["xi_index"]), complex(e["re"], e.get("im", 0.0))) for e in obj["entries"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed sequence JSON: {exc}") from exc
    return CoeffSequence.from_entries(g, triples)


_MAGIC = b"BSVKMAT1"


def write_matrix(path, M: ScaleMatrix, row_ref: str, col_ref: str, seed: int | None = None,
                 extra: dict | None = None) -> None:
    """Binary COO file: magic, header length, JSON header, then int64 ``j,k,row,col`` and float64 ``re,im``.

    Files ending in ``.json`` get the same triplets as a JSON document.
    """
    trip = list(M.triplets())
    header = {"schema": "besovkit.matrix/1", "row_grid_ref": row_ref, "col_grid_ref": col_ref,
              "shape": list(M.shape), "nnz": len(trip)}
    if seed is not None:
        header["seed"] = int(seed)
    if extra:
        header.update(extra)
    if str(path).endswith(".json"):
        header["entries"] = [{"j": j, "xi_index": r, "k": k, "eta_index": c, "re": v.real, "im": v.imag}
                             for j, r, k, c, v in trip]
        write_json(path, header)
        return
    arr = np.array([(j, k, r, c) for j, r, k, c, _ in trip], dtype="<i8").reshape(-1, 4)
    vals = np.array([(v.real, v.imag) for *_, v in trip], dtype="<f8").reshape(-1, 2)
    head = dumps(header, indent=None).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(arr.T).tobytes())
        fh.write(np.ascontiguousarray(vals.T).tobytes())


def read_matrix(path, base=None) -> tuple[ScaleMatrix, dict]:
    base = Path(path).parent if base is None else base
    if str(path).endswith(".json"):
        header = read_json(path)
        ents = header.pop("entries")
        j = np.array([e["j"] for e in ents], int)
        r = np.array([e["xi_index"] for e in ents], int)
        k = np.array([e["k"] for e in ents], int)
        c = np.array([e["eta_index"] for e in ents], int)
        v = np.array([complex(e["re"], e["im"]) for e in ents])
    else:
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise ValueError(f"{path} is not a besovkit matrix file")
            (n,) = struct.unpack("<Q", fh.read(8))
            header = _restore(json.loads(fh.read(n)))
            nnz = int(header["nnz"])
            ints = np.frombuffer(fh.read(8 * 4 * nnz), dtype="<i8").reshape(4, nnz)
            fl = np.frombuffer(fh.read(8 * 2 * nnz), dtype="<f8").reshape(2, nnz)
        j, k, r, c = ints
        v = fl[0] + 1j * fl[1]
    rg = resolve_grid(header["row_grid_ref"], base)
    cg = resolve_grid(header["col_grid_ref"], base)
    M = ScaleMatrix(rg, cg)
    for jj, kk in sorted(set(zip(j.tolist(), k.tolist()))):
        sel = (j == jj) & (k == kk)
        M[jj, kk] = sp.coo_matrix((v[sel], (r[sel], c[sel])), shape=(rg.sizes[jj], cg.sizes[kk]))
    return M, header


def manifold_from_json(path) -> Decomposition:
    return Decomposition.from_json(read_json(path))
