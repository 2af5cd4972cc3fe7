"""Command-line interface.

Exit codes: 0 success, 2 usage, 3 numerical failure, 4 capability, and 5
for an iterative solve that stopped at its iteration cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAPABILITY, EXIT_MAXITER = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        out[key.lower().replace("-", "_")] = value
    return out


SOLVE_DEFAULTS = {
    "dim": "2",
    "model": "constant",
    "c0": "1500",
    "frequency": "10",
    "extent": "",
    "extent_wavelengths": "60,60",
    "ppw": "",
    "h": "",
    "scheme": "IOFD",
    "correction": "none",
    "layer_width": "8",
    "layer_transmission": "0.003",
    "source": "",
    "solver": "direct",
    "tol": "1e-6",
    "max_iters": "100",
    "omega": "0.7",
    "nu": "4",
    "seed": "0",
    "output": "solution.hfd",
    "report": "",
    "history": "",
}


def _floats(text, n=None):
    vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _report(path, items: dict):
    text = "".join(f"{k} = {v}\n" for k, v in items.items())
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


# ---------------------------------------------------------------------------
# dispersion


def cmd_dispersion(args):
    import numpy as np

    from .coeffs import SchemeError, as_scheme
    from .symbol import phase_error_curve

    try:
        schemes = [as_scheme(s.strip(), args.dim) for s in args.schemes.split(",") if s.strip()]
    except SchemeError as exc:
        raise UsageError(str(exc)) from None
    n = int(np.floor(args.invg_max / args.invg_step + 1e-9))
    if n < 1:
        raise UsageError("--invg-step exceeds --invg-max")
    grid = np.round(np.arange(1, n + 1) * args.invg_step, 10)
    n_angles = args.angles or (64 if args.dim == 2 else 200)
    theta_cols = ["theta"] if args.dim == 2 else ["theta_polar", "theta_azimuth"]
    rows, summary = [], []
    for s in schemes:
        for g in grid:
            ang, d = phase_error_curve(s, float(g), n_angles, strict=False)
            gP = (d + 1.0) * 2 * np.pi * g
            for a, gp, dd in zip(np.atleast_1d(ang) if args.dim == 2 else ang, gP, d):
                th = [f"{a:.12g}"] if args.dim == 2 else [f"{a[0]:.12g}", f"{a[1]:.12g}"]
                rows.append([s.tag, args.dim, f"{g:.10g}", *th, f"{gp:.15g}", f"{dd:.12e}"])
            summary.append([s.tag, f"{g:.10g}", f"{np.max(np.abs(d)):.12e}"])
    _write_csv(args.out, ["scheme", "dim", "invG", *theta_cols, "gP", "delta_ph"], rows)
    spath = args.summary
    if spath is None and args.out not in (None, "-"):
        p = Path(args.out)
        spath = str(p.with_name(p.stem + "_summary" + p.suffix))
    _write_csv(spath or "-", ["scheme", "invG", "max_delta_ph"], summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# tables


def _table_header(name, n_params):
    sym = "beta" if name.startswith("q") else "alpha"
    cols = ["invG"]
    for j in range(1, n_params + 1):
        cols += [f"{sym}_{j}", f"d{sym}_{j}"]
    return cols


def table_rows(table, node_digits):
    rows = []
    for i, x in enumerate(table.nodes):
        row = [f"{x:.{node_digits}f}"]
        for j in range(table.param_count):
            row += [f"{table.values[i, j]:.6f}", f"{table.derivs[i, j]:.6f}"]
        rows.append(row)
    return rows


def fitted_table(which: str):
    from .optimize import ObjectiveConfig, fit_q, optimize_alpha

    base = which.removesuffix("-fitted")
    dim = int(base[-2])
    cfg = ObjectiveConfig(dim=dim)
    if base.startswith("q"):
        return fit_q(cfg)
    return optimize_alpha(cfg).table


def cmd_tables(args):
    from . import tables

    which = args.which.lower()
    base = which.removesuffix("-fitted")
    if base not in tables.RAW:
        raise UsageError(f"unknown table {args.which!r}; choose from {', '.join(sorted(tables.RAW))} (optionally with -fitted)")
    if which.endswith("-fitted"):
        table = fitted_table(which)
        rows = table_rows(table, 2 if base.endswith("2d") else 4)
        n_params = table.param_count
    else:
        rows = tables.rows(which)
        n_params = (len(rows[0]) - 1) // 2
    _write_csv(args.out, _table_header(base, n_params), rows)
    return EXIT_OK


def read_table_csv(path):
    import numpy as np

    from .coeffs import HermiteTable

    with open(path, newline="") as fh:
        r = list(csv.reader(fh))
    arr = np.array(r[1:], dtype=float)
    return HermiteTable(arr[:, 0], arr[:, 1::2], arr[:, 2::2], Path(path).stem)


# ---------------------------------------------------------------------------
# optimize / qfit


def cmd_optimize(args):
    import warnings

    from .coeffs import iofd_table
    from .optimize import ObjectiveConfig, objective_value, optimize_alpha

    cfg = ObjectiveConfig(dim=args.dim, max_iter=args.max_iter, lam=args.lam)
    t = time.perf_counter()
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        res = optimize_alpha(cfg)
    rows = table_rows(res.table, 2 if args.dim == 2 else 4)
    _write_csv(args.out, _table_header(f"iofd{args.dim}d", cfg.n_params), rows)
    ref = objective_value(iofd_table(args.dim), cfg)
    _report(args.report, {
        "dim": args.dim,
        "objective": f"{res.objective:.6e}",
        "embedded_objective": f"{ref:.6e}",
        "converged": res.converged,
        "stage_steps": ",".join(str(len(h) - 1) for h in res.history),
        "seconds": f"{time.perf_counter() - t:.1f}",
    })
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_qfit(args):
    from .coeffs import iofd_table, q_table
    from .optimize import ObjectiveConfig, fit_q
    from .symbol import q_error

    cfg = ObjectiveConfig(dim=args.dim)
    alpha = read_table_csv(args.alpha_table) if args.alpha_table else iofd_table(args.dim)
    table = fit_q(cfg, alpha)
    _write_csv(args.out, _table_header(f"q{args.dim}d", table.param_count), table_rows(table, 2 if args.dim == 2 else 4))
    n_angles = 64 if args.dim == 2 else 200
    rows = []
    for g in table.nodes[1:]:
        rows.append([f"{g:.2f}", f"{q_error(args.dim, g, n_angles, table, alpha):.3e}",
                     f"{q_error(args.dim, g, n_angles, q_table(args.dim), alpha):.3e}"])
    _write_csv(args.errors, ["invG", "q_error_fitted", "q_error_embedded"], rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _build_model(cfg: dict):
    import numpy as np

    from .assembly import Grid, builtin_model, read_velocity

    dim = int(cfg["dim"])
    freq = float(cfg["frequency"])
    omega = 2 * np.pi * freq
    name = cfg["model"]
    if name in ("constant", "smoothed-marmousi-like"):
        c0 = float(cfg["c0"])
        if bool(cfg["ppw"]) == bool(cfg["h"]):
            raise UsageError("give exactly one of ppw and h")
        if cfg["extent"]:
            extent = _floats(cfg["extent"], dim)
        else:
            lam0 = c0 / freq
            extent = [v * lam0 for v in _floats(cfg["extent_wavelengths"], dim)]
        cmin = c0 * (1.5 if name != "constant" else 1.0)
        h = float(cfg["h"]) if cfg["h"] else cmin / (freq * float(cfg["ppw"]))
        n = [max(8, int(round(e / h)) + 1) for e in extent]
        return builtin_model(name, Grid(dim, tuple(n), h), omega, c0, int(cfg["seed"]))
    path = Path(name)
    if not path.exists():
        raise FileNotFoundError(f"model file {name!r} not found")
    return read_velocity(path, omega)


def cmd_solve(args):
    import numpy as np

    from .assembly import (
        AbsorbingLayerSpec,
        assemble_helmholtz,
        assemble_q,
        delta_source,
        interior_mask,
        pad_model,
        write_field,
    )
    from .solver import CapabilityError, TwoGridConfig, band_lu_solve, bicgstab_accelerated, twogrid_solve

    cfg = dict(SOLVE_DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {args.config!r} not found")
        cfg.update(parse_config(path.read_text()))
    for item in args.set or []:
        cfg.update(parse_config(item))
    unknown = set(cfg) - set(SOLVE_DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if cfg["dim"] != "2":
        raise CapabilityError("only 2-D solves are supported (3-D analysis and assembly are available)")
    model = _build_model(cfg)
    ppw_min, ppw_max = model.ppw_range()
    if ppw_min < 2.5:
        g = model.invG()
        idx = np.unravel_index(np.argmax(g), g.shape)
        x = [model.grid.cell_axis(j)[i] for j, i in enumerate(idx)]
        raise ValueError(f"only {ppw_min:.2f} points per wavelength near x = {tuple(round(float(v), 3) for v in x)}; need 2.5")
    layer = AbsorbingLayerSpec(float(cfg["layer_width"]), float(cfg["layer_transmission"]))
    nl = layer.thickness(model)
    inner = model.grid
    model = pad_model(model, nl)
    solver = cfg["solver"]
    if solver in ("twogrid", "bicgstab") and any(v % 2 == 0 for v in model.grid.n):
        # two-grid needs 2m+1 points per axis: add one more layer cell on the high side
        from .assembly import Grid, VelocityModel

        g = model.grid
        n = tuple(v + (1 - v % 2) for v in g.n)
        c = np.pad(model.c, [(0, a - b) for a, b in zip(n, g.n)], mode="edge")
        model = VelocityModel(Grid(g.dim, n, g.h, g.origin), c, model.omega)
    grid = model.grid
    if cfg["source"]:
        xs = _floats(cfg["source"], 2)
    else:
        xs = [inner.origin[j] + inner.h * (inner.n[j] - 1) / 2 for j in range(2)]
    idx = tuple(int(round((x - o) / grid.h)) for x, o in zip(xs, grid.origin))
    f = delta_source(grid, idx, nl)
    Q = assemble_q(model) if cfg["correction"].lower() in ("q", "yes", "true", "1") else None
    rhs = f if Q is None else Q.apply(f)
    t = time.perf_counter()
    tg = TwoGridConfig(float(cfg["omega"]), int(cfg["nu"]), cfg["scheme"], float(cfg["tol"]), int(cfg["max_iters"]))
    history, its, status = None, 0, "direct"
    if solver == "direct":
        P = assemble_helmholtz(model, cfg["scheme"], layer)
        v = band_lu_solve(P, rhs)
    elif solver == "twogrid":
        res = twogrid_solve(model, cfg["scheme"], tg, rhs, layer)
        v, its, history = res.u, res.iterations, res.history
        status = "converged" if res.converged else "max-iters"
        P = assemble_helmholtz(model, cfg["scheme"], layer)
    elif solver == "bicgstab":
        res = bicgstab_accelerated(model, cfg["scheme"], tg, rhs, layer)
        v, its, history = res.u, res.iterations, res.history
        status = "converged" if res.converged else "max-iters"
        P = assemble_helmholtz(model, cfg["scheme"], layer)
    else:
        raise UsageError(f"unknown solver {solver!r}; use direct, twogrid or bicgstab")
    wall = time.perf_counter() - t
    u = v if Q is None else Q.apply(v)
    residual = float(np.linalg.norm(P.apply(v) - rhs) / np.linalg.norm(rhs))
    write_field(cfg["output"], grid, u)
    if history is not None and cfg["history"]:
        _write_csv(cfg["history"], ["iter", "relative_residual"], [[i, f"{r:.6e}"] for i, r in enumerate(history)])
    items = {f"config.{k}": v for k, v in sorted(cfg.items())}
    items.update({
        "grid": "x".join(str(v) for v in grid.n),
        "h": f"{grid.h:.6g}",
        "layer_points": nl,
        "ppw_min": f"{ppw_min:.3f}",
        "ppw_max": f"{ppw_max:.3f}",
        "solver": solver,
        "status": status,
        "iterations": its,
        "residual": f"{residual:.3e}",
        "wall_time": f"{wall:.2f}",
        "interior_points": int(interior_mask(grid, nl).sum()),
    })
    _report(cfg["report"], items)
    return EXIT_MAXITER if status == "max-iters" else EXIT_OK


# ---------------------------------------------------------------------------
# greens / twogrid


def cmd_greens(args):
    import numpy as np

    from .assembly import AbsorbingLayerSpec, GridField
    from .symbol import max_phase_error
    from .validate import annulus_amplitude_error, point_source_experiment

    layer = AbsorbingLayerSpec(args.layer_width, args.transmission)
    t = time.perf_counter()
    exp = point_source_experiment(args.ppw, args.distance, args.scheme, args.correction, layer, args.clearance)
    ref = exp.reference()
    mx, phase = exp.phase_error()
    lam = args.ppw * exp.grid.h
    amp = annulus_amplitude_error(GridField(exp.grid, exp.field), exp.probe, ref, 2 * lam, exp.interior)
    R, T, _, _ = exp.probe.points()
    rows = [[f"{t_:.6f}", f"{r_:.6f}", f"{p_:.6e}", f"{a_:.6e}"] for t_, r_, p_, a_ in zip(T.ravel(), R.ravel(), phase.ravel(), amp.ravel())]
    _write_csv(args.out, ["theta", "r", "phase_err", "amp_err"], rows)
    pred = 2 * np.pi * max_phase_error(args.scheme, 1 / args.ppw) * (args.distance + 1)
    _report(args.report, {
        "scheme": args.scheme,
        "ppw": args.ppw,
        "distance_wavelengths": args.distance,
        "correction": args.correction,
        "grid": "x".join(str(v) for v in exp.grid.n),
        "phase_err_max": f"{mx:.4e}",
        "phase_err_median": f"{np.median(np.abs(phase)):.4e}",
        "phase_err_predicted_max": f"{pred:.4e}",
        "amp_err_max": f"{np.max(amp):.4e}",
        "amp_err_median": f"{np.median(amp):.4e}",
        "seconds": f"{time.perf_counter() - t:.1f}",
    })
    return EXIT_OK


def twogrid_experiment(ppw: float, n: int = 601, model_name: str = "constant", cfg=None, layer=None, h: float = 1.0, seed: int = 0):
    """Point source in the middle of an ``n x n`` grid; returns the solve result."""
    import numpy as np

    from .assembly import AbsorbingLayerSpec, Grid, builtin_model, delta_source
    from .solver import TwoGridConfig, twogrid_solve

    cfg = TwoGridConfig() if cfg is None else cfg
    layer = AbsorbingLayerSpec() if layer is None else layer
    grid = Grid(2, (n, n), h)
    cmin = 1.0 if model_name == "constant" else 1.5
    omega = 2 * np.pi * cmin / (ppw * h)
    model = builtin_model(model_name, grid, omega, 1.0, seed)
    f = delta_source(grid, (n // 2, n // 2), layer.thickness(model))
    return twogrid_solve(model, "IOFD", cfg, f, layer), omega / (2 * np.pi)


def cmd_twogrid(args):
    from .solver import TwoGridConfig

    if args.ppw_list:
        ppws = _floats(args.ppw_list)
    elif args.ppw is not None:
        ppws = [args.ppw]
    else:
        ppws = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    cfg = TwoGridConfig(args.omega, args.nu, "IOFD", args.tol, args.max_iters)
    rows, code = [], EXIT_OK
    for p in ppws:
        res, freq = twogrid_experiment(p, args.n, args.model, cfg)
        rows.append([f"{p:g}", f"{freq:.6g}", res.iterations, "converged" if res.converged else "max-iters"])
        if args.history:
            stem = Path(args.history)
            path = stem.with_name(f"{stem.stem}_ppw{p:g}{stem.suffix}") if len(ppws) > 1 else stem
            _write_csv(path, ["iter", "relative_residual"], [[i, f"{r:.6e}"] for i, r in enumerate(res.history)])
        if not res.converged:
            code = EXIT_MAXITER
    _write_csv(args.out, ["ppw", "freq", "its", "status"], rows)
    return code


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="iofd", description="Interpolated optimized finite differences for Helmholtz problems")
    p.add_argument("--threads", type=int, default=None, help="worker threads for numerical kernels (env IOFD_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dispersion", help="phase-slowness error curves")
    d.add_argument("--dim", type=int, choices=(2, 3), default=2)
    d.add_argument("--schemes", default="IOFD,CHO6,FD2")
    d.add_argument("--invg-max", type=float, default=0.4)
    d.add_argument("--invg-step", type=float, default=0.005)
    d.add_argument("--angles", type=int, default=None)
    d.add_argument("--out", default="-")
    d.add_argument("--summary", default=None, help="summary CSV (default: <out>_summary.csv)")
    d.set_defaults(func=cmd_dispersion)

    t = sub.add_parser("tables", help="export coefficient tables as CSV")
    t.add_argument("--which", required=True, help="iofd2d, iofd3d, q2d, q3d, or any of these with -fitted")
    t.add_argument("--out", default="-")
    t.set_defaults(func=cmd_tables)

    o = sub.add_parser("optimize", help="re-derive the IOFD table")
    o.add_argument("--dim", type=int, choices=(2, 3), default=2)
    o.add_argument("--max-iter", type=int, default=200)
    o.add_argument("--lam", type=float, default=1e-12)
    o.add_argument("--out", default="-")
    o.add_argument("--report", default=None)
    o.set_defaults(func=cmd_optimize)

    q = sub.add_parser("qfit", help="fit the amplitude-correction table")
    q.add_argument("--dim", type=int, choices=(2, 3), default=2)
    q.add_argument("--alpha-table", default=None, help="CSV of the family table (default: embedded IOFD)")
    q.add_argument("--out", default="-")
    q.add_argument("--errors", default=None, help="CSV of per-node max-angle Q errors")
    q.set_defaults(func=cmd_qfit)

    s = sub.add_parser("solve", help="solve a point-source problem from a key=value config")
    s.add_argument("config", nargs="?", default=None)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("greens", help="compare a constant-medium solve with the exact Green's function")
    g.add_argument("--ppw", type=float, default=6.0)
    g.add_argument("--distance", type=float, default=100.0, help="source to probe, wavelengths")
    g.add_argument("--scheme", default="IOFD")
    g.add_argument("--correction", action="store_true")
    g.add_argument("--layer-width", type=float, default=12.0)
    g.add_argument("--transmission", type=float, default=1e-5)
    g.add_argument("--clearance", type=float, default=25.0, help="source to bottom layer, wavelengths")
    g.add_argument("--out", default="-")
    g.add_argument("--report", default=None)
    g.set_defaults(func=cmd_greens)

    w = sub.add_parser("twogrid", help="two-grid iteration counts")
    w.add_argument("--model", default="constant", choices=("constant", "smoothed-marmousi-like"))
    w.add_argument("--ppw", type=float, default=None, help="single resolution (default: sweep 5..10)")
    w.add_argument("--ppw-list", default=None, help="comma list, e.g. 5,6,8")
    w.add_argument("--n", type=int, default=601)
    w.add_argument("--omega", type=float, default=0.7)
    w.add_argument("--nu", type=int, default=4)
    w.add_argument("--tol", type=float, default=1e-6)
    w.add_argument("--max-iters", type=int, default=100)
    w.add_argument("--out", default="-")
    w.add_argument("--history", default=None)
    w.set_defaults(func=cmd_twogrid)
    return p


def _set_threads(n):
    if n is None:
        env = os.environ.get("IOFD_THREADS")
        n = int(env) if env else None
    if n is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    _set_threads(args.threads)

    from .coeffs import CoefficientRangeError, SchemeError
    from .solver import CapabilityError, DivergenceError

    try:
        return args.func(args)
    except (UsageError, SchemeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CoefficientRangeError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
