"""Command-line workbench: ``poincarekit <command> --space FILE ...``.

Exit codes: 0 success, 2 invalid input, 3 a checked inequality failed,
4 infeasible (no admissible curve).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import gallery
from .connectivity import (SearchConfig, alpha_estimate, alpha_profile, exhaustive_alpha,
                           make_obstacle)
from .curves import curve_integral, enumerate_paths_oracle, min_obstruction_cost
from .errors import ParseError, PoincareKitError, TooLarge
from .maximal import maximal_function
from .poincare import analyze
from .selfimprove import (ASYMPTOTIC_NOTE, IterationParams, choose_k, iteration_step,
                          kz_empirical_scan, kz_epsilon_bound, kz_epsilon_from_CA)
from .space import load_csv, load_json, space_to_dict

SCHEMA_VERSION = 1
EXIT_VIOLATION = 3


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParseError(f"not a comma-separated list of numbers: {text!r}") from None


def _load_space(path):
    if path.endswith(".csv"):
        base = path[:-4]
        return load_csv(path, base + ".measure.csv")
    return load_json(path)


def _write(text, out):
    """Write to stdout, or atomically to ``out`` via a temporary file in the same directory."""
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(out))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(doc):
    return json.dumps(doc, indent=1, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv(rows, header_comment=None):
    buf = io.StringIO()
    if header_comment:
        for line in header_comment:
            buf.write(f"# {line}\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _config(args):
    cfg = SearchConfig(seed=args.seed)
    if getattr(args, "oracle_cap", None) is not None:
        cfg.oracle_cap = args.oracle_cap
    return cfg


# -- commands -------------------------------------------------------------------

def cmd_analyze(args):
    space = _load_space(args.space)
    cfg = _config(args)
    report = analyze(space, args.p, args.c, args.r_max, cfg, tau_grid=_floats(args.tau_grid))
    doc = report.to_dict(space)
    doc["seed"] = args.seed
    if args.format == "csv":
        rows = [{"p": report.p, "C": report.C, "C_PI": report.C_PI, "C_PPI": report.C_PPI,
                 "C_A": report.C_A, "doubling": report.doubling,
                 "quasiconvexity": report.quasiconvexity}]
        _write(_csv(rows, [f"schema_version={SCHEMA_VERSION}", f"seed={args.seed}"]), args.out)
    else:
        _write(_json(doc), args.out)
    m = report.margins
    bad = [k for k in ("pointwise", "ptpi_to_ap_integral", "ptpi_to_ap_length") if m.get(k, 0) < 0]
    return EXIT_VIOLATION if bad else 0


def cmd_alpha(args):
    space = _load_space(args.space)
    cfg = _config(args)
    taus = _floats(args.tau_grid)
    positive = [t for t in taus if t > 0]
    profile = alpha_profile(space, args.p, args.c, positive, cfg, r0=args.r_max)
    rows = profile.to_rows(space)
    for t in taus:
        if t <= 0:
            rows.insert(0, {"tau": t, "alpha": 0.0, "x": "", "y": "", "exact": True})
    if args.format == "json":
        doc = profile.to_dict(space)
        doc["seed"] = args.seed
        doc["rows"] = [r for r in rows if r["tau"] <= 0] + doc["rows"]
        _write(_json(doc), args.out)
    else:
        _write(_csv(rows, [f"schema_version={SCHEMA_VERSION}", f"seed={args.seed}",
                           f"p={args.p}", f"C={args.c}"]), args.out)
    return 0


def cmd_verify_kz(args):
    space = _load_space(args.space)
    cfg = _config(args)
    kz_epsilon_bound(1.0, args.p, 1.0)  # validates p before any search
    qs = _floats(args.q_grid) if args.q_grid else []
    scan = kz_empirical_scan(space, args.p, args.c, qs, cfg, blowup=args.blowup, r_max=args.r_max)
    eps = scan.epsilon_bound
    eps_ca = kz_epsilon_from_CA(scan.doubling, args.p, args.c_a) if args.c_a else None
    header = [f"schema_version={SCHEMA_VERSION}", f"seed={args.seed}", f"p={args.p}", f"C={args.c}",
              f"doubling={scan.doubling!r}", f"C_PI={scan.base!r}",
              f"epsilon_bound={eps!r}", f"epsilon_from_CA={eps_ca!r}", ASYMPTOTIC_NOTE]
    if args.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "seed": args.seed, "p": args.p, "C": args.c,
               "doubling": scan.doubling, "C_PI": scan.base, "epsilon_bound": eps,
               "epsilon_from_CA": eps_ca, "note": ASYMPTOTIC_NOTE, "monotone": scan.monotone,
               "rows": scan.to_rows()}
        _write(_json(doc), args.out)
    else:
        _write(_csv(scan.to_rows(), header), args.out)
    in_window = [r for r in scan.rows if r.q >= args.p - eps]
    return 0 if all(r.within for r in in_window) else EXIT_VIOLATION


def _load_obstacle(space, path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    for key in ("x", "y", "values"):
        if key not in doc:
            raise ParseError(f"{path}: missing key {key!r}")
    values = doc["values"]
    if isinstance(values, dict):
        try:
            g = np.array([float(values.get(str(v), 0.0)) for v in space.nodes])
        except (TypeError, ValueError):
            raise ParseError(f"{path}: key 'values' holds a non-number") from None
    else:
        g = space.field(values)
    x = doc["x"] if not isinstance(doc["x"], list) else tuple(doc["x"])
    y = doc["y"] if not isinstance(doc["y"], list) else tuple(doc["y"])
    return space.idx(x), space.idx(y), g


def cmd_iterate(args):
    space = _load_space(args.space)
    xi, yi, g = _load_obstacle(space, args.obstacle)
    q = args.q if args.q is not None else args.p
    params = IterationParams(args.p, q, args.c, args.m, args.delta, args.k or 1, args.tau,
                             x=xi, y=yi)
    ob = make_obstacle(space, g, q, params.L, args.tau, xi, yi)
    if not args.k:
        params = choose_k(space, ob, params, k_max=args.k_max)
    trace = iteration_step(space, ob, params, depth=args.depth)
    doc = trace.to_dict(space)
    doc["seed"] = args.seed
    _write(_json(doc), args.out)
    return 0 if trace.ok else EXIT_VIOLATION


def _oracle_solver(space, cfg, rng, node_cap):
    mismatches, checked = [], 0
    n = space.n
    for xi in range(n):
        for yi in range(xi + 1, n):
            g = rng.integers(0, 4, size=n).astype(float)
            for factor in (1.0, 1.5, 2.0):
                budget = factor * space.dist[xi, yi]
                cost, _ = min_obstruction_cost(space, xi, yi, g, budget, by_index=True)
                paths = enumerate_paths_oracle(space, xi, yi, budget, node_cap, g, by_index=True)
                best = curve_integral(paths[0], g)
                checked += 1
                if cost != best:
                    mismatches.append({"x": space.nodes[xi], "y": space.nodes[yi],
                                       "budget": budget, "solver": cost, "oracle": best})
    return checked, mismatches


def _oracle_maximal(space, cfg, rng, node_cap):
    mismatches, checked = [], 0
    for p in (1.0, 2.0):
        f = rng.random(space.n)
        for s in np.unique(space.metric[space.metric > 0]):
            fast = maximal_function(space, f, p, s)
            for x in range(space.n):
                best = max(
                    float(np.average(f[space.metric[x] <= rad] ** p,
                                     weights=space.measure[space.metric[x] <= rad])) ** (1 / p)
                    for rad in np.unique(space.metric[x]) if rad <= s)
                checked += 1
                if not math.isclose(fast[x], best, rel_tol=1e-12, abs_tol=1e-15):
                    mismatches.append({"x": space.nodes[x], "p": p, "s": s, "fast": fast[x],
                                       "oracle": best})
    return checked, mismatches


def _oracle_alpha(space, cfg, rng, node_cap):
    if space.n > cfg.oracle_cap:
        raise TooLarge(f"{space.n} nodes exceeds the enumeration cap {cfg.oracle_cap}")
    mismatches, checked = [], 0
    heur = SearchConfig(seed=cfg.seed, families=("indicator",), greedy_candidates=space.n)
    for tau in (0.25, 0.5, 1.0):
        exact = exhaustive_alpha(space, 1.0, 1.0, tau, cfg)
        approx = alpha_estimate(space, 1.0, 1.0, tau, heur, exhaustive=False)
        checked += 1
        if approx.alpha > exact.alpha:
            mismatches.append({"tau": tau, "exact": exact.alpha, "heuristic": approx.alpha})
    return checked, mismatches


def cmd_oracle(args):
    space = _load_space(args.space)
    cfg = _config(args)
    node_cap = args.oracle_cap if args.oracle_cap is not None else 10
    if space.n > node_cap:
        raise TooLarge(f"{space.n} nodes exceeds the oracle cap {node_cap}")
    rng = np.random.default_rng(args.seed)
    runner = {"solver": _oracle_solver, "maximal": _oracle_maximal, "alpha": _oracle_alpha}
    checked, mismatches = runner[args.mode](space, cfg, rng, node_cap)
    doc = {"schema_version": SCHEMA_VERSION, "seed": args.seed, "mode": args.mode,
           "checked": checked, "mismatches": mismatches}
    _write(_json(doc), args.out)
    return EXIT_VIOLATION if mismatches else 0


def cmd_generate(args):
    kind = args.kind
    if kind == "grid":
        space = gallery.make_grid(args.width, args.height, args.edge_len, args.measure)
    elif kind == "path":
        space = gallery.make_path(args.n, args.edge_len, args.measure)
    elif kind == "complete":
        space = gallery.make_complete(args.n, args.edge_len, args.measure)
    elif kind == "theta":
        space = gallery.make_theta(args.short, args.long, args.subdivisions, args.measure)
    elif kind == "snowflake":
        space = gallery.snowflake_view(gallery.make_path(args.n, args.edge_len, args.measure),
                                       args.exponent)
    else:
        _, space = gallery.power_weight_line(args.n, args.exponent)
    _write(_json(space_to_dict(space)), args.out)
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poincarekit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt="json"):
        p.add_argument("--space", required=True, help="space file (.json, or .csv edge list "
                       "with a sibling .measure.csv)")
        p.add_argument("--p", type=float, default=2.0)
        p.add_argument("--c", type=float, default=1.0, help="inflation / length factor C")
        p.add_argument("--r-max", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("json", "csv"), default=fmt)
        p.add_argument("--oracle-cap", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("analyze", help="doubling, C_PI, C_PPI, C_A and quasiconvexity")
    common(p)
    p.add_argument("--tau-grid", default="0.25,0.5,1.0")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("alpha", help="alpha profile over a tau grid")
    common(p, "csv")
    p.add_argument("--tau-grid", default="0.25,0.5,1.0")
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("verify-kz", help="C_PI(q) scan against the explicit epsilon bound")
    common(p, "csv")
    p.add_argument("--q-grid", default=None)
    p.add_argument("--blowup", type=float, default=10.0)
    p.add_argument("--c-a", type=float, default=None, help="A_p constant for the second bound")
    p.set_defaults(func=cmd_verify_kz)

    p = sub.add_parser("iterate", help="one gap-replacement step for an obstacle file")
    common(p)
    p.add_argument("--obstacle", required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--k", type=int, default=0, help="0 picks the smallest k that certifies")
    p.add_argument("--k-max", type=int, default=64)
    p.add_argument("--depth", type=int, default=1)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("oracle", help="brute-force cross-checks")
    common(p)
    p.add_argument("--mode", choices=("solver", "maximal", "alpha"), default="solver")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="write a gallery space file")
    p.add_argument("kind", choices=("grid", "path", "complete", "theta", "snowflake", "weighted-line"))
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--short", type=float, default=2.0)
    p.add_argument("--long", type=float, default=4.0)
    p.add_argument("--subdivisions", type=int, default=1)
    p.add_argument("--edge-len", type=float, default=1.0)
    p.add_argument("--measure", type=float, default=1.0)
    p.add_argument("--exponent", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PoincareKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
