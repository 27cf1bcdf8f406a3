"""Command-line front end: ``besovkit <command> ...``.

Exit codes: 0 on success, 1 when a check fails (axiom, conformity,
membership, decay, equivalence), 2 on usage or input errors.  Every artifact
records the seed it was produced with, and outputs are byte-identical for
identical inputs and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
GLOBAL_DEFAULTS = {"seed": 0, "threads": None, "tol": 1e-9}


class UsageError(Exception):
    """Bad flags or unreadable inputs (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _besov(text: str, d: int):
    from .seq import BesovParams

    try:
        return BesovParams.parse(text, d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(obj, out: str | None, seed: int) -> None:
    from .io import dumps

    if isinstance(obj, dict):
        obj = {**obj, "seed": seed}
    text = dumps(obj) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_with_seed(text: str, seed: int, path: str | None) -> None:
    body = f"# seed={seed}\n" + text
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)


def _read_seq(path: str):
    from .io import read_json, seq_from_json

    try:
        return seq_from_json(read_json(path), base=os.path.dirname(os.path.abspath(path)))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read sequence {path}: {exc}") from None


def _system(basis: str, manifold: str, J: int):
    from .wavelet import WaveletError, WaveletSystem, parse_basis

    try:
        return WaveletSystem(parse_basis(basis), manifold, J)
    except (WaveletError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_grid(args) -> int:
    from .grid import (cardinality_check, check_dimension_band, check_net, check_separation)
    from .io import grid_to_json, read_json, grid_from_json, resolve_grid

    try:
        if args.input:
            g = grid_from_json(read_json(args.input))
        elif args.ref:
            g = resolve_grid(args.ref)
        else:
            raise UsageError("give --input or --ref")
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.action == "build":
        _emit(grid_to_json(g), args.out, args.seed)
        return EXIT_OK
    J = g.J if args.max_level is None else min(args.max_level, g.J)
    report = {"axiom": args.axiom, "levels": []}
    ok = True
    if args.axiom == "a1":
        for j in range(J + 1):
            r = check_net(g, j, args.density)
            report["levels"].append({"j": j, "ok": r.ok, "worst_gap": r.worst_gap, "bound": r.bound,
                                     "witness": r.witness})
            ok &= r.ok
    elif args.axiom == "a2":
        for j in range(J + 1):
            r = check_separation(g, j, args.cap)
            report["levels"].append({"j": j, "ok": r.ok, "max_count": r.max_count, "cap": r.cap,
                                     "witness": r.witness})
            ok &= r.ok
    elif args.axiom == "a3":
        ok, ratios = check_dimension_band(g, args.band, range(J + 1))
        report["levels"] = [{"j": j, "ratio": r} for j, r in enumerate(ratios)]
    else:
        r = cardinality_check(g.truncate(J), args.band)
        ok = r.ok
        report["levels"] = [{"j": j, "count": c, "ratio": q} for j, (c, q) in enumerate(zip(r.counts, r.ratios))]
        report["bounded"] = g.bounded
    report["ok"] = bool(ok)
    _emit(report, args.out, args.seed)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_seq(args) -> int:
    import numpy as np

    from .io import dumps, resolve_grid, seq_to_json
    from .seq import random_sequence

    try:
        g = resolve_grid(args.ref)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    rng = np.random.default_rng(args.seed)
    a = random_sequence(g, rng, density=args.density, level_decay=args.decay)
    text = dumps(seq_to_json(a, args.ref, args.seed)) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_norm(args) -> int:
    from .io import dumps
    from .seq import BesovParams, quasi_norm

    a = _read_seq(args.seq)
    try:
        prm = BesovParams(args.alpha, args.p, args.q, a.grid.d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(dumps(quasi_norm(a, prm)))
    return EXIT_OK


def cmd_embed(args) -> int:
    from .seq import embedding_exists, embedding_threshold

    src, dst = _besov(args.src, args.d), _besov(args.dst, args.d)
    ok = embedding_exists(src, dst, bounded=not args.unbounded)
    _emit({"from": [src.alpha, src.p, src.q], "to": [dst.alpha, dst.p, dst.q], "d": args.d,
           "bounded": not args.unbounded, "gamma": src.alpha - dst.alpha,
           "threshold": embedding_threshold(src.p, dst.p, args.d), "embeds": ok}, None, args.seed)
    return EXIT_OK


def cmd_ad(args) -> int:
    from . import admat
    from .io import read_matrix, resolve_grid, seq_to_json, write_matrix

    if args.action == "random":
        if not (args.row_ref and args.eps):
            raise UsageError("ad random needs --row-ref and --eps")
        try:
            rg = resolve_grid(args.row_ref)
            cg = resolve_grid(args.col_ref or args.row_ref)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        prm = admat.AdParams(args.alpha0, args.alpha1, args.p, args.eps, rg.d)
        M = admat.random_ad_matrix(rg, cg, prm, seed=args.seed)
        write_matrix(args.out, M, args.row_ref, args.col_ref or args.row_ref, seed=args.seed)
        return EXIT_OK
    if not args.matrix:
        raise UsageError("--matrix is required")
    try:
        M, header = read_matrix(args.matrix)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read matrix: {exc}") from None
    d = M.row_grid.d
    if args.action == "check":
        if args.eps is None:
            raise UsageError("ad check needs --eps")
        r = admat.ad_membership(M, admat.AdParams(args.alpha0, args.alpha1, args.p, args.eps, d))
        ok = r.sup_ratio <= args.cap * (1 + args.tol)
        _emit({"sup_ratio": r.sup_ratio, "cap": args.cap, "witness": list(r.witness) if r.witness else None,
               "ok": ok}, args.out, args.seed)
        return EXIT_OK if ok else EXIT_CHECK
    if args.action == "fit":
        eps = admat.ad_fit_epsilon(M, args.alpha0, args.alpha1, args.p, cap=args.cap)
        _emit({"epsilon": eps, "cap": args.cap}, args.out, args.seed)
        return EXIT_OK
    if not args.seq:
        raise UsageError("ad apply needs --seq")
    a = _read_seq(args.seq)
    if a.grid.sizes != M.col_grid.sizes:
        raise UsageError("sequence does not live on the matrix column grid")
    b = admat.apply(M, a)
    _emit(seq_to_json(b, header["row_grid_ref"]), args.out, args.seed)
    return EXIT_OK


def cmd_manifold(args) -> int:
    from .geometry import builtin_manifolds, conformity_check
    from .io import manifold_from_json

    try:
        dec = manifold_from_json(args.input) if args.input else builtin_manifolds(args.name)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    if args.action == "info":
        obj = dec.to_json()
        obj.update({"name": dec.name, "N": dec.N, "n_interfaces": len(dec.interfaces)})
        _emit(obj, args.out, args.seed)
        return EXIT_OK
    rep = conformity_check(dec, tol=args.tol)
    obj = {"name": dec.name, "ok": rep.ok, "max_deviation": rep.max_deviation,
           "interfaces": [{"i": r.i, "j": r.j, "deviation": r.deviation, "ok": r.ok} for r in rep.interfaces],
           "overlaps": [list(o) for o in rep.overlaps], "undeclared": [list(u) for u in rep.undeclared]}
    _emit(obj, args.out, args.seed)
    return EXIT_OK if rep.ok else EXIT_CHECK


def cmd_gramian(args) -> int:
    from .funcspace import gramian, gramian_decay_check
    from .io import write_matrix

    psi = _system(args.basis_a, args.manifold, args.levels)
    phi = _system(args.basis_b, args.manifold, args.levels)
    G = gramian(psi, phi, args.levels)
    ref_a = f"wavelet:{args.manifold},J={args.levels},D={psi.uni.D},Dt={psi.uni.D_dual}"
    ref_b = f"wavelet:{args.manifold},J={args.levels},D={phi.uni.D},Dt={phi.uni.D_dual}"
    if args.out:
        write_matrix(args.out, G, ref_b, ref_a, seed=args.seed,
                     extra={"basis_a": psi.label, "basis_b": phi.label, "manifold": args.manifold})
    if args.decay_alpha is None:
        _emit({"nnz": G.nnz, "shape": list(G.shape)}, args.report, args.seed)
        return EXIT_OK
    r = gramian_decay_check(G, psi, phi, args.decay_alpha, eps0=args.eps0)
    _emit({"nnz": G.nnz, "shape": list(G.shape), "slope_up": r.slope_up, "slope_down": r.slope_down,
           "required_up": r.required_up, "required_down": r.required_down, "ok": r.ok}, args.report, args.seed)
    return EXIT_OK if r.ok else EXIT_CHECK


def _parse_range(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad level range {text!r}") from None


def cmd_equivalence(args) -> int:
    from .funcspace import AdmissibilityError, default_corpus, equivalence_ratio
    from .seq import BesovParams

    if args.corpus != "default":
        raise UsageError("only the default corpus is available")
    Js = _parse_range(args.levels)
    psi = _system(args.basis_a, args.manifold, max(Js))
    phi = _system(args.basis_b, args.manifold, max(Js))
    try:
        prm = BesovParams(args.alpha, args.p, args.q, psi.d)
        rep = equivalence_ratio(default_corpus(psi.dec), psi, phi, prm, Js)
    except (AdmissibilityError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    lo0, hi0 = rep.per_J[min(Js)]
    lo1, hi1 = rep.per_J[max(Js)]
    ok = lo1 >= lo0 / (1 + args.band_tol) and hi1 <= hi0 * (1 + args.band_tol)
    _emit({"manifold": args.manifold, "basis_a": psi.label, "basis_b": phi.label,
           "alpha": args.alpha, "p": args.p, "q": args.q,
           "per_J": [{"J": J, "min_ratio": lo, "max_ratio": hi} for J, (lo, hi) in sorted(rep.per_J.items())],
           "min_ratio": rep.min_ratio, "max_ratio": rep.max_ratio, "band_tol": args.band_tol, "ok": ok},
          args.out, args.seed)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_nterm(args) -> int:
    import csv
    import io as _io

    from .io import dumps
    from .nterm import error_curve

    a = _read_seq(args.seq)
    target = _besov(args.target, a.grid.d)
    top = sum(a.grid.sizes) if args.max_n is None else args.max_n
    curve = error_curve(a, target, range(0, top + 1))
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "error", "upper_bound"])
    for n, e in curve.points:
        wr.writerow([n, dumps(e), int(curve.upper_bound)])
    _csv_with_seed(buf.getvalue(), args.seed, args.csv)
    return EXIT_OK


def cmd_diagram(args) -> int:
    from .nterm import diagram_export
    from .seq import BesovParams, adaptivity

    if args.point:
        params = [_besov(t, args.d) for t in args.point]
    else:
        params = [BesovParams(0.0, 2.0, 2.0, args.d)]
        params += [BesovParams(a, adaptivity(a, args.d), adaptivity(a, args.d), args.d) for a in (0.5, 1.0, 2.0)]
    _csv_with_seed(diagram_export(params, args.d), args.seed, args.csv)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="besovkit", description="Besov-type sequence spaces, almost diagonal matrices "
                                                "and patchwise spline wavelets.")
    # global flags are accepted before and after the command name
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed recorded in all outputs (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (default: BESOVKIT_THREADS, else all cores)")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="tolerance used by check commands (default 1e-9)")
    p._add_container_actions(common)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    g = sub.add_parser("grid", help="build or check multiscale grids")
    g.add_argument("action", choices=["build", "check"])
    g.add_argument("--input", help="grid JSON file")
    g.add_argument("--ref", help="grid reference, e.g. dyadic:d=1,J=5")
    g.add_argument("--axiom", choices=["a1", "a2", "a3", "a4"], default="a1")
    g.add_argument("--max-level", type=int)
    g.add_argument("--density", type=int, default=8)
    g.add_argument("--cap", type=int)
    g.add_argument("--band", type=float, default=16.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("seq", help="write a random coefficient sequence")
    s.add_argument("--ref", required=True)
    s.add_argument("--density", type=float, default=0.5)
    s.add_argument("--decay", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_seq)

    n = sub.add_parser("norm", help="quasi-norm of a sequence")
    n.add_argument("--alpha", type=float, required=True)
    n.add_argument("--p", type=float, required=True)
    n.add_argument("--q", type=float, required=True)
    n.add_argument("--seq", required=True)
    n.set_defaults(func=cmd_norm)

    e = sub.add_parser("embed", help="embedding predicate between two sequence spaces")
    e.add_argument("--from", dest="src", required=True, help="alpha,p,q")
    e.add_argument("--to", dest="dst", required=True, help="alpha,p,q")
    e.add_argument("--d", type=int, default=1)
    grp = e.add_mutually_exclusive_group()
    grp.add_argument("--bounded", action="store_true", default=True)
    grp.add_argument("--unbounded", action="store_true")
    e.set_defaults(func=cmd_embed)

    a = sub.add_parser("ad", help="almost diagonal matrices")
    a.add_argument("action", choices=["check", "fit", "apply", "random"])
    a.add_argument("--matrix")
    a.add_argument("--alpha0", type=float, default=0.0)
    a.add_argument("--alpha1", type=float, default=0.0)
    a.add_argument("--p", type=float, default=2.0)
    a.add_argument("--eps", type=float)
    a.add_argument("--cap", type=float, default=1.0)
    a.add_argument("--seq")
    a.add_argument("--row-ref")
    a.add_argument("--col-ref")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ad)

    m = sub.add_parser("manifold", help="decomposable manifolds")
    m.add_argument("action", choices=["check", "info"])
    m.add_argument("--name", default="interval")
    m.add_argument("--input", help="manifold JSON file")
    m.add_argument("--out")
    m.set_defaults(func=cmd_manifold)

    gr = sub.add_parser("gramian", help="change-of-basis Gramian between two spline systems")
    gr.add_argument("--basis-a", required=True)
    gr.add_argument("--basis-b", required=True)
    gr.add_argument("--manifold", default="interval")
    gr.add_argument("--levels", type=int, required=True)
    gr.add_argument("--out")
    gr.add_argument("--report")
    gr.add_argument("--decay-alpha", type=float)
    gr.add_argument("--eps0", type=float, default=0.1)
    gr.set_defaults(func=cmd_gramian)

    q = sub.add_parser("equivalence", help="norm ratios over a function corpus")
    q.add_argument("--corpus", default="default")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--p", type=float, required=True)
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--basis-a", default="spline:D=1,Dt=1")
    q.add_argument("--basis-b", default="spline:D=2,Dt=2")
    q.add_argument("--manifold", default="interval")
    q.add_argument("--levels", default="4..7")
    q.add_argument("--band-tol", type=float, default=0.15)
    q.add_argument("--out")
    q.set_defaults(func=cmd_equivalence)

    t = sub.add_parser("nterm", help="greedy n-term error curve")
    t.add_argument("--seq", required=True)
    t.add_argument("--target", required=True, help="alpha,p,q")
    t.add_argument("--max-n", type=int)
    t.add_argument("--csv")
    t.set_defaults(func=cmd_nterm)

    dg = sub.add_parser("diagram", help="DeVore-Triebel diagram points as CSV")
    dg.add_argument("--d", type=int, default=1)
    dg.add_argument("--point", action="append", help="alpha,p,q (repeatable)")
    dg.add_argument("--csv")
    dg.set_defaults(func=cmd_diagram)
    return p


def _configure_threads(n: int | None) -> int:
    if n is None:
        env = os.environ.get("BESOVKIT_THREADS")
        n = int(env) if env and env.isdigit() else (os.cpu_count() or 1)
    n = max(1, int(n))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for key, default in GLOBAL_DEFAULTS.items():
            if not hasattr(args, key):
                setattr(args, key, default)
        _configure_threads(args.threads)
        return int(args.func(args))
    except UsageError as exc:
        print(f"besovkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
