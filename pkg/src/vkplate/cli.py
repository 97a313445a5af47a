"""Command-line front end: ``vkplate <subcommand> [options]``.

Exit codes: 0 success, 1 usage or input error, 2 solver non-convergence,
3 construction invalid (recovery at too large a thickness).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .elpde import (ELOptions, clamped_bubble, el_residual, manufactured_sources, natural_bc_residual,
                    sample_expr, solve_el)
from .energy2d import Mode, PlateState, bending_strain, stretching_strain
from .minimize import MinimizeOptions, minimize_energy
from .prestrain import PrestrainError, PrestrainSpec, prestrain_from_dict, preset
from .quadform import (Material, oracle_q2, q2_incomp, q2_penalized, q2_relax, sandwich_gap)
from .recovery3d import ConstructionError, convergence_study, recipe, recipe_from_dict
from .tensorfield import GridSpec

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_INVALID = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# parsing helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) if "/" in t else float(t) for t in str(text).split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _matrix2(text: str) -> np.ndarray:
    vals = _float_list(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"a 2x2 matrix needs 4 entries (row-major), got {text!r}")
    return np.array(vals).reshape(2, 2)


def _threads() -> int:
    raw = os.environ.get("VKPLATE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"VKPLATE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"VKPLATE_THREADS must be a positive integer, got {raw!r}")
    return n


def _resolve_prestrain(obj) -> PrestrainSpec:
    if isinstance(obj, dict):
        return prestrain_from_dict(obj)
    text = str(obj)
    if text.endswith(".json"):
        path = Path(text)
        if not path.is_file():
            raise UsageError(f"prestrain file not found: {text}")
        return prestrain_from_dict(json.loads(path.read_text()))
    return preset(text)


# config keys -> argparse destinations
_CONFIG_MAP = {
    ("material", "mu"): "mu", ("material", "lambda"): "lam", ("material", "k"): "k",
    ("grid", "n"): "n", ("grid", "n3"): "n3",
    ("solver", "max_iter"): "max_iter", ("solver", "gtol"): "gtol", ("solver", "tol"): "tol",
    ("solver", "memory"): "memory", ("solver", "damping"): "damping",
}
_CONFIG_TOP = {"seed", "mode", "prestrain", "recipe", "h", "init", "amplitude", "manufactured", "nu"}


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(obj, dict):
        raise UsageError(f"config {path}: top level must be an object")
    out = {}
    for key, val in obj.items():
        if key in _CONFIG_TOP:
            out[key] = val
        elif key in ("material", "grid", "solver") and isinstance(val, dict):
            for sub, sval in val.items():
                dest = _CONFIG_MAP.get((key, sub))
                if dest is None:
                    raise UsageError(f"config {path}: unknown key {key}.{sub}")
                out[dest] = sval
        else:
            raise UsageError(f"config {path}: unknown key {key!r}")
    # list-valued flags accept JSON lists
    for dest in ("lam", "k", "h", "n"):
        if isinstance(out.get(dest), list):
            out[dest] = ",".join(str(x) for x in out[dest])
    return out


# ---------------------------------------------------------------------------
# output


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns: list[str], rows: list[list], header: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# {json.dumps(header, sort_keys=True)}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for row in rows:
        wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _long_rows(columns: list[str], rows: list[list], id_cols: int) -> tuple[list[str], list[list]]:
    """Tidy long format: id columns, then (variable, value)."""
    out = []
    for row in rows:
        for name, val in zip(columns[id_cols:], row[id_cols:]):
            out.append(list(row[:id_cols]) + [name, val])
    return columns[:id_cols] + ["variable", "value"], out


class _Sink:
    def __init__(self, args, header: dict):
        self.out_dir = Path(args.out_dir) if args.out_dir else None
        self.plot = args.emit_plot_data
        self.header = header

    def table(self, name: str, columns, rows, id_cols: int = 1, echo: bool = False) -> None:
        text = _csv_text(columns, rows, self.header)
        if self.out_dir is not None:
            _atomic_write(self.out_dir / f"{name}.csv", text)
            if self.plot:
                lc, lr = _long_rows(columns, rows, id_cols)
                _atomic_write(self.out_dir / f"{name}_long.csv", _csv_text(lc, lr, self.header))
        if echo or self.out_dir is None:
            sys.stdout.write(text)

    def report(self, name: str, obj: dict) -> None:
        body = {"config": self.header, **obj}
        text = json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n"
        if self.out_dir is not None:
            _atomic_write(self.out_dir / f"{name}.json", text)
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _json_float(x: float):
    return None if not np.isfinite(x) else float(x)


def _header(args, **extra) -> dict:
    skip = {"func", "config", "out_dir", "emit_plot_data", "out"}
    resolved = {k: v for k, v in vars(args).items() if k not in skip}
    for k, v in list(resolved.items()):
        if isinstance(v, np.ndarray):
            resolved[k] = v.tolist()
        elif isinstance(v, list):
            resolved[k] = [x.tolist() if isinstance(x, np.ndarray) else x for x in v]
    resolved.update(extra)
    return {"version": __version__, "subcommand": args.command, **resolved}


# ---------------------------------------------------------------------------
# subcommands


def cmd_quadform(args) -> int:
    m = Material(args.mu, args.lam)
    ks = _float_list(args.k) if isinstance(args.k, str) else list(args.k)
    if any(k <= 0 for k in ks):
        raise UsageError("penalties --k must be positive")
    mats = list(args.matrix or [])
    if args.random:
        rng = np.random.default_rng(args.seed)
        mats.extend(rng.standard_normal((args.random, 2, 2)))
    if not mats:
        raise UsageError("give --matrix entries and/or --random N")
    cols = ["F11", "F12", "F21", "F22", "Q2"] + [f"Q2k_{k:g}" for k in ks] + ["Q2In"]
    cols += [f"gap_{k:g}" for k in ks] + ["oracle_rel_err"]
    rows = []
    for F in mats:
        closed = {"none": float(q2_relax(m, F)), "trace_free": float(q2_incomp(m, F))}
        closed.update({k: float(q2_penalized(m, k, F)) for k in ks})
        err = 0.0
        for key, val in closed.items():
            ref = oracle_q2(m, F, key)
            err = max(err, abs(val - ref) / max(abs(ref), 1e-300) if ref != 0 else abs(val))
        rows.append(list(F.ravel()) + [closed["none"]] + [closed[k] for k in ks] + [closed["trace_free"]]
                    + [float(sandwich_gap(m, k, F)) for k in ks] + [err])
    header = _header(args, k=ks)
    text = _csv_text(cols, rows, header)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    worst = max(r[-1] for r in rows)
    print(f"rows={len(rows)} max_oracle_rel_err={worst:.3e}", file=sys.stderr)
    return EXIT_OK


def _field_rows(s: PlateState, p: PrestrainSpec):
    X, Y = s.grid.mesh()
    S = stretching_strain(s, p).values
    B = bending_strain(s, p).values
    cols = ["x1", "x2", "w1", "w2", "v", "S11", "S22", "S12", "B11", "B22", "B12"]
    data = [X, Y, s.w.values[0], s.w.values[1], s.v.values, S[0, 0], S[1, 1], S[0, 1],
            B[0, 0], B[1, 1], B[0, 1]]
    return cols, np.stack([d.ravel() for d in data], axis=1).tolist()


def cmd_minimize(args) -> int:
    p = _resolve_prestrain(args.prestrain)
    mode = Mode.parse(args.mode)
    if mode.kind == "penalized" and ":" not in args.mode:
        mode = Mode("penalized", args.k)
    lams = _float_list(args.lam) if isinstance(args.lam, str) else [float(args.lam)]
    grid = p.domain.grid(args.n)
    opts = MinimizeOptions(max_iter=args.max_iter, gtol=args.gtol, memory=args.memory, seed=args.seed)
    if args.init == "random":
        init = PlateState.random(grid, args.amplitude, args.seed)
    else:
        init = PlateState.zeros(grid)

    def run(lam):
        return minimize_energy(p, Material(args.mu, lam), mode, init, opts)

    with ThreadPoolExecutor(max_workers=min(_threads(), len(lams))) as pool:
        reports = list(pool.map(run, lams))

    header = _header(args, prestrain=p.to_config(), mode=str(mode), lam=lams)
    sink = _Sink(args, header)
    runs = []
    for lam, rep in zip(lams, reports):
        summary = rep.summary()
        summary.pop("wall_time")  # keep artifacts reproducible
        summary["lambda"] = lam
        runs.append(summary)
        tag = f"fields_lambda_{lam:g}" if len(lams) > 1 else "fields"
        cols, rows = _field_rows(rep.state, p)
        if sink.out_dir is not None:
            sink.table(tag, cols, rows, id_cols=2)
        print(f"lambda={lam:g} energy={rep.energy.total:.6e} grad_max={rep.grad_max:.2e} "
              f"iterations={rep.iterations} converged={rep.converged} wall={rep.wall_time:.2f}s",
              file=sys.stderr)
    sink.report("report", {"runs": runs})
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NONCONVERGED


def _el_setup(args, grid):
    p = _resolve_prestrain(args.prestrain)
    m = Material(args.mu, float(args.lam))
    if args.manufactured:
        vs, ps = clamped_bubble(16), clamped_bubble(16)
        sm, sb = manufactured_sources(vs, ps, p, m, grid)
        return p, m, (vs, ps), sm, sb
    return p, m, None, None, None


def cmd_elsolve(args) -> int:
    p0 = _resolve_prestrain(args.prestrain)
    grid = p0.domain.grid(args.n)
    p, m, exact, sm, sb = _el_setup(args, grid)
    opts = ELOptions(tol=args.tol, max_iter=args.max_iter, damping=args.damping)
    sol = solve_el(p, m, grid, opts=opts, membrane_source=sm, bending_source=sb)
    _, _, norms = el_residual(sol, p, m, sm, sb)
    out = {"iterations": sol.iterations, "converged": sol.converged, "message": sol.message,
           "residual": norms, "natural_bc": natural_bc_residual(sol, p, m, nu=args.nu),
           "max_abs_v": float(np.max(np.abs(sol.v.values))),
           "max_abs_phi": float(np.max(np.abs(sol.phi.values)))}
    if exact is not None:
        out["error"] = {"v": float(np.max(np.abs(sol.v.values - sample_expr(exact[0], grid).values))),
                        "phi": float(np.max(np.abs(sol.phi.values - sample_expr(exact[1], grid).values)))}
    sink = _Sink(args, _header(args, prestrain=p.to_config()))
    if sink.out_dir is not None:
        X, Y = grid.mesh()
        rows = np.stack([X.ravel(), Y.ravel(), sol.v.values.ravel(), sol.phi.values.ravel()], axis=1)
        sink.table("solution", ["x1", "x2", "v", "phi"], rows.tolist(), id_cols=2)
    sink.report("report", out)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_residual(args) -> int:
    """Residual of the exact manufactured pair on a sequence of grids, with fitted order."""
    ns = _int_list(args.n) if isinstance(args.n, str) else [int(args.n)]
    if len(ns) < 2:
        raise UsageError("residual needs at least two grid sizes, e.g. --n 17,33,65")
    p = _resolve_prestrain(args.prestrain)
    m = Material(args.mu, float(args.lam))
    vs, ps = clamped_bubble(16), clamped_bubble(16)
    from .elpde import ELSolution

    rows, hs = [], []
    for n in ns:
        grid = p.domain.grid(n)
        sm, sb = manufactured_sources(vs, ps, p, m, grid)
        sol = ELSolution(sample_expr(vs, grid), sample_expr(ps, grid))
        _, _, norms = el_residual(sol, p, m, sm, sb)
        hs.append(grid.hx)
        rows.append([n, grid.hx, norms["membrane"], norms["bending"]])
    orders = {}
    for j, key in ((2, "membrane"), (3, "bending")):
        vals = np.array([r[j] for r in rows])
        orders[key] = _json_float(float(np.polyfit(np.log(hs), np.log(vals), 1)[0])) if np.all(vals > 0) else None
    sink = _Sink(args, _header(args, prestrain=p.to_config(), n=ns))
    sink.table("residual", ["n", "h", "membrane", "bending"], rows, id_cols=2)
    sink.report("orders", {"orders": orders})
    return EXIT_OK


def cmd_recovery(args) -> int:
    if isinstance(args.recipe, dict):
        r = recipe_from_dict(args.recipe)
    else:
        params = {"c": args.c} if args.recipe != "zero" else {}
        if args.recipe == "bump":
            params["amp"] = args.amp
        r = recipe(args.recipe, **params)
    hs = _float_list(args.h) if isinstance(args.h, str) else [float(x) for x in args.h]
    grid = r.p.domain.grid(args.n)
    try:
        table = convergence_study(r, hs, grid, args.n3, args.tol, args.samples, args.seed)
    except ConstructionError as exc:
        print(f"construction invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    header = _header(args, recipe=r.config(), h=hs)
    sink = _Sink(args, header)
    cols = list(table.COLUMNS)
    sink.table("recovery", cols, [[rec[c] for c in cols] for rec in table.as_records()], echo=True)
    sink.report("slopes", {"limit": table.limit,
                           "slopes": {k: _json_float(v) for k, v in table.slopes.items()}})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with material/grid/solver sections and top-level keys")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", help="directory for CSV/JSON artifacts (atomic writes)")
    common.add_argument("--emit-plot-data", action="store_true", help="also write tidy long-format CSV")

    mat = _Parser(add_help=False)
    mat.add_argument("--mu", type=float, default=1.0)
    mat.add_argument("--lambda", dest="lam", default="0", help="Lame lambda (comma list sweeps in minimize)")

    parser = _Parser(prog="vkplate", description="Incompressible prestrained von Karman plate toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quadform", parents=[common], help="tabulate relaxed quadratic forms")
    q.add_argument("--mu", type=float, default=1.0)
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--k", default="1", help="comma list of positive penalties")
    q.add_argument("--matrix", type=_matrix2, action="append", help="2x2 matrix, row-major: a,b,c,d")
    q.add_argument("--random", type=int, default=0, help="number of random matrices")
    q.add_argument("--out", help="CSV path (default stdout)")
    q.set_defaults(func=cmd_quadform)

    mn = sub.add_parser("minimize", parents=[common, mat], help="minimize the discrete plate energy")
    mn.add_argument("--prestrain", default="zero", help="preset such as swell(0.1), or a .json file")
    mn.add_argument("--n", type=int, default=17)
    mn.add_argument("--mode", default="incompressible", help="incompressible | compressible | penalized:<k>")
    mn.add_argument("--k", type=float, default=0.0, help="penalty when --mode penalized carries no value")
    mn.add_argument("--max-iter", type=int, default=2000)
    mn.add_argument("--gtol", type=float, default=1e-8)
    mn.add_argument("--memory", type=int, default=10)
    mn.add_argument("--init", choices=("zero", "random"), default="zero")
    mn.add_argument("--amplitude", type=float, default=1e-2)
    mn.set_defaults(func=cmd_minimize)

    for name, func, hlp in (("elsolve", cmd_elsolve, "solve the Euler-Lagrange system"),
                            ("residual", cmd_residual, "manufactured residual refinement study")):
        e = sub.add_parser(name, parents=[common, mat], help=hlp)
        e.add_argument("--prestrain", default="zero")
        e.add_argument("--n", default="33" if name == "elsolve" else "17,33,65")
        e.add_argument("--tol", type=float, default=1e-10)
        e.add_argument("--max-iter", type=int, default=200)
        e.add_argument("--damping", type=float, default=1.0)
        e.add_argument("--nu", type=float, default=0.5, help="Poisson ratio in the shear condition")
        e.add_argument("--manufactured", action="store_true", help="append manufactured sources")
        e.set_defaults(func=func)

    rc = sub.add_parser("recovery", parents=[common], help="3D recovery construction convergence study")
    rc.add_argument("--recipe", default="uniform-bend", help="zero | uniform-bend | saddle-bend | bump")
    rc.add_argument("--c", type=float, default=1.0, help="prestrain curvature parameter")
    rc.add_argument("--amp", type=float, default=0.5, help="bump amplitude")
    rc.add_argument("--h", default="1/8,1/16,1/32,1/64", help="decreasing thickness list")
    rc.add_argument("--n", type=int, default=17, help="in-plane nodes per side (odd)")
    rc.add_argument("--n3", type=int, default=33, help="thickness nodes (odd)")
    rc.add_argument("--tol", type=float, default=1e-10)
    rc.add_argument("--samples", type=int, default=1000, help="random det samples per h")
    rc.set_defaults(func=cmd_recovery)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.config:
            # config values become defaults; explicit flags still win
            cfg = _load_config(args.config)
            sub = parser._subparsers._group_actions[0].choices[args.command]
            known = {a.dest for a in sub._actions}
            unknown = set(cfg) - known
            if unknown:
                raise UsageError(f"config keys not used by {args.command}: {sorted(unknown)}")
            sub.set_defaults(**cfg)
            args = parser.parse_args(argv)
        if getattr(args, "n", None) is not None and args.command == "elsolve":
            args.n = int(args.n)
        return args.func(args)
    except (UsageError, PrestrainError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"vkplate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConstructionError as exc:
        print(f"vkplate: construction invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
