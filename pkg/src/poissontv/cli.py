"""Benchmark command line.

Verbs:
  generate  build a synthetic problem bundle (blur + Poisson noise at a
            target SNR) into a directory
  solve     run one solver on one problem at a single tolerance
  sweep     run a tolerance sweep and write a summary table, per-tolerance
            traces and restored images
  report    turn sweep summaries into gnuplot-ready data files and a
            plot script

Configuration is a flat JSON document; command-line flags override config
values; every effective value (including defaults) is echoed into the
meta.json written next to the results, so runs are self-describing.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .blur import gaussian_psf, motion_psf, disk_psf
from .constraints import FeasibleSet
from .image import load_f64img, load_pgm, save_f64img, save_pgm
from .solver import (SGP_STOP_PATIENCE, AcquireConfig, acquire_solve,
                     sgp_restore)
from .sgp import SgpConfig
from .testbed import load_problem, make_problem, save_problem, shepp_logan

DEFAULTS = {
    "problem": "phantom",       # built-in name, image file, or bundle dir
    "size": 256,                # phantom grid size
    "variant": "modified",      # phantom intensity table
    "blur": "gaussian",         # gaussian | motion | disk
    "sigma": 2.0,               # gaussian width
    "psf_size": 0,              # gaussian support; 0 = full image
    "length": 11,               # motion blur length (pixels)
    "angle": 45.0,              # motion blur direction (degrees)
    "radius": 4,                # out-of-focus disk radius (pixels)
    "snr": 35.0,
    "seed": 1,
    "background": 1e-10,        # per-pixel background counts
    "method": "acquire",        # acquire | sgp | both (sweep only)
    "lambda": 6e-3,
    "mu": 1e-2,
    "gamma": 1e-5,
    "eta": 1e-5,
    "delta": 0.5,
    "memory": 5,
    "theta": 0.1,
    "inner_max_iters": 10,      # 0 = uncapped
    "constraint": "s1",         # s1 (nonneg) | s2 (nonneg + flux)
    "start": "auto",            # auto | observed | flat
    "tol": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
    "max_time": 25.0,
    "max_iters": 10000,
    "monotone": False,
    "out": "results",
}

SUMMARY_COLUMNS = ("method", "problem", "snr", "tol", "min_rel_err",
                   "mssim", "iters", "time_s")


class ConfigError(ValueError):
    pass


def _parse_tol_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("field 'tol': entries must be numbers")
    return values


def load_config(args):
    """Merge defaults, an optional JSON config file, and CLI overrides."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"field 'config': cannot read {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"field 'config': invalid JSON: {exc}")
        for key, value in user.items():
            if key not in DEFAULTS:
                raise ConfigError(f"field '{key}': unknown config key")
            cfg[key] = value
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    tol = cfg["tol"]
    if isinstance(tol, (int, float)):
        cfg["tol"] = tol = [float(tol)]
    tol = [float(t) for t in tol]
    if not tol:
        raise ConfigError("field 'tol': list must be nonempty")
    if any(t <= 0 for t in tol):
        raise ConfigError("field 'tol': values must be positive")
    if any(a <= b for a, b in zip(tol, tol[1:])):
        raise ConfigError("field 'tol': values must be strictly decreasing")
    cfg["tol"] = tol
    if cfg["lambda"] <= 0:
        raise ConfigError("field 'lambda': must be positive")
    if cfg["mu"] <= 0:
        raise ConfigError("field 'mu': must be positive")
    if cfg["constraint"] not in ("s1", "s2"):
        raise ConfigError("field 'constraint': must be 's1' or 's2'")
    if cfg["blur"] not in ("gaussian", "motion", "disk"):
        raise ConfigError("field 'blur': must be gaussian, motion or disk")
    if cfg["start"] not in ("auto", "observed", "flat"):
        raise ConfigError("field 'start': must be auto, observed or flat")
    methods = _method_list(cfg["method"])
    if not methods or any(m not in ("acquire", "sgp") for m in methods):
        raise ConfigError("field 'method': must be acquire, sgp or both")
    if cfg["max_time"] <= 0 or cfg["max_iters"] < 1:
        raise ConfigError("field 'max_time'/'max_iters': must be positive")


def _method_list(method):
    if method == "both":
        return ["acquire", "sgp"]
    return [m.strip() for m in str(method).split(",") if m.strip()]


def build_psf(cfg, shape):
    if cfg["blur"] == "gaussian":
        size = int(cfg["psf_size"])
        if size == 0:
            # Full-image support: the largest odd size fitting the grid.
            size = min(shape)
            size -= 1 - size % 2
        return gaussian_psf(size, cfg["sigma"])
    if cfg["blur"] == "motion":
        return motion_psf(cfg["length"], cfg["angle"])
    return disk_psf(cfg["radius"])


def problem_label(cfg):
    name = cfg["problem"]
    if name == "phantom":
        return "phantom"
    if os.path.isdir(name):
        # Bundles record the name they were generated under.
        try:
            with open(os.path.join(name, "meta.json")) as fh:
                recorded = json.load(fh).get("problem")
            if recorded:
                return recorded
        except (OSError, json.JSONDecodeError):
            pass
    stem = os.path.basename(name.rstrip("/"))
    return os.path.splitext(stem)[0]


def resolve_problem(cfg):
    """Build or load the test problem named by the config."""
    name = cfg["problem"]
    if os.path.isdir(name):
        return load_problem(name)
    if name == "phantom":
        reference = shepp_logan(int(cfg["size"]), cfg["variant"])
    elif name.endswith((".pgm", ".f64img")):
        loader = load_pgm if name.endswith(".pgm") else load_f64img
        try:
            reference = loader(name)
        except OSError as exc:
            raise ConfigError(f"field 'problem': cannot read {name}: {exc}")
    else:
        raise ConfigError(f"field 'problem': cannot resolve {name!r} "
                          "(expected 'phantom', a .pgm/.f64img file, or a "
                          "bundle directory)")
    psf = build_psf(cfg, reference.shape)
    return make_problem(reference, psf, cfg["snr"], int(cfg["seed"]),
                        background=cfg["background"])


def feasible_set_for(cfg, problem):
    if cfg["constraint"] == "s2":
        return FeasibleSet.nonneg_flux(problem.flux)
    return FeasibleSet.nonneg()


def starting_guess(cfg, problem):
    mode = cfg["start"]
    if mode == "auto":
        mode = "observed" if cfg["blur"] == "gaussian" else "flat"
    if mode == "observed":
        return problem.observed.copy()
    flat = problem.flux / problem.observed.size
    return np.full_like(problem.observed, flat)


def solver_config(cfg, tol, track_mssim=False):
    return AcquireConfig(
        lam=cfg["lambda"],
        mu=cfg["mu"],
        gamma=cfg["gamma"],
        eta=cfg["eta"],
        delta=cfg["delta"],
        memory=int(cfg["memory"]),
        theta=cfg["theta"],
        inner_max_iters=int(cfg["inner_max_iters"]),
        tol=tol,
        max_outer_iters=int(cfg["max_iters"]),
        max_time=cfg["max_time"],
        monotone=bool(cfg["monotone"]),
        track_mssim=track_mssim,
        sgp=SgpConfig(),
    )


def run_method(method, cfg, problem, tol, track_mssim=False, on_iterate=None):
    data = problem.data()
    feasible = feasible_set_for(cfg, problem)
    x0 = starting_guess(cfg, problem)
    config = solver_config(cfg, tol, track_mssim)
    run = acquire_solve if method == "acquire" else sgp_restore
    return run(data, feasible, x0, config,
               ground_truth=problem.ground_truth, on_iterate=on_iterate)


def write_meta(path, cfg, problem=None, extra=None):
    meta = {key: cfg[key] for key in sorted(DEFAULTS)}
    if problem is not None:
        meta["flux"] = problem.flux
        meta["scale"] = problem.scale
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def save_restored(out_dir, stem, image):
    save_f64img(os.path.join(out_dir, stem + ".f64img"), image)
    save_pgm(os.path.join(out_dir, stem + ".pgm"), image)


def _tol_tag(tol):
    return f"{tol:.0e}".replace("+", "")


# ---------------------------------------------------------------- verbs


def cmd_generate(args):
    cfg = load_config(args)
    problem = resolve_problem(cfg)
    out = cfg["out"]
    save_problem(problem, out, extra_meta={
        "problem": problem_label(cfg),
        "blur": cfg["blur"],
        "lambda_hint": cfg["lambda"],
    })
    print(f"wrote problem bundle to {out}")
    return 0


def cmd_solve(args):
    cfg = load_config(args)
    problem = resolve_problem(cfg)
    tol = min(cfg["tol"])
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    method = _method_list(cfg["method"])[0]
    x, trace = run_method(method, cfg, problem, tol, track_mssim=True)
    trace.write_csv(os.path.join(out, "trace.csv"))
    save_restored(out, "restored", x)
    idx = int(np.argmin(trace.rel_error))
    write_meta(os.path.join(out, "meta.json"), cfg, problem, extra={
        "tol_used": tol,
        "iters": trace.iters[-1],
        "min_rel_err": trace.rel_error[idx],
        "mssim_at_min": trace.mssim[idx],
        "time_s": trace.time_s[-1],
    })
    print(f"{method} {problem_label(cfg)} tol={tol:g}: "
          f"min rel err {trace.rel_error[idx]:.4g}, "
          f"mssim {trace.mssim[idx]:.4g}, "
          f"{trace.iters[-1]} iters, {trace.time_s[-1]:.2f} s")
    return 0


def sweep_rows(method, cfg, problem, tols):
    """One master run at the smallest tolerance, summarized at every
    tolerance.

    Stopping on relative change at Tol truncates the (deterministic)
    iterate sequence, so one run at min(Tol) reproduces every run of the
    sweep; iterates are snapshotted at each tolerance crossing.
    """
    pending = list(tols)        # strictly decreasing
    snapshots = {}
    # SGP stops only after the relative change stays small for a full
    # steplength cycle; ACQUIRE stops on the first small change.
    patience = SGP_STOP_PATIENCE if method == "sgp" else 1
    streak = {tol: 0 for tol in tols}

    def on_iterate(k, x, rel_change):
        for tol in list(pending):
            streak[tol] = streak[tol] + 1 if rel_change <= tol else 0
            if streak[tol] >= patience:
                pending.remove(tol)
                snapshots[tol] = (k, x.copy())

    x, trace = run_method(method, cfg, problem, tols[-1],
                          track_mssim=True, on_iterate=on_iterate)
    for tol in pending:         # never reached: budget/iteration stop
        snapshots[tol] = (trace.iters[-1], x.copy())
    rows = []
    label = problem_label(cfg)
    for tol in tols:
        k, x_tol = snapshots[tol]
        errs = trace.rel_error[:k]
        idx = int(np.argmin(errs))
        rows.append({
            "method": method,
            "problem": label,
            "snr": cfg["snr"],
            "tol": tol,
            "min_rel_err": errs[idx],
            "mssim": trace.mssim[idx],
            "iters": k,
            "time_s": trace.time_s[k - 1],
            "_trace": trace,
            "_restored": x_tol,
        })
    return rows


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([
                row["method"], row["problem"], f"{row['snr']:.17g}",
                f"{row['tol']:.17g}", f"{row['min_rel_err']:.17g}",
                f"{row['mssim']:.17g}", row["iters"],
                f"{row['time_s']:.17g}",
            ])


def cmd_sweep(args):
    cfg = load_config(args)
    problem = resolve_problem(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    tols = cfg["tol"]
    all_rows = []
    for method in _method_list(cfg["method"]):
        rows = sweep_rows(method, cfg, problem, tols)
        for row in rows:
            tag = f"{method}_tol{_tol_tag(row['tol'])}"
            row["_trace"].write_csv(os.path.join(out, f"trace_{tag}.csv"),
                                    last=row["iters"])
            save_restored(out, f"restored_{tag}", row["_restored"])
        all_rows.extend(rows)
    write_summary(os.path.join(out, "summary.csv"), all_rows)
    write_meta(os.path.join(out, "meta.json"), cfg, problem)
    for row in all_rows:
        print(f"{row['method']:8s} tol={row['tol']:g}: "
              f"min rel err {row['min_rel_err']:.4g}, "
              f"mssim {row['mssim']:.4g}, {row['iters']} iters, "
              f"{row['time_s']:.2f} s")
    print(f"wrote {os.path.join(out, 'summary.csv')}")
    return 0


def read_summary(directory):
    path = os.path.join(directory, "summary.csv")
    if not os.path.isfile(path):
        raise ConfigError(f"no summary.csv in {directory}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args):
    rows = []
    for directory in args.dirs:
        rows.extend(read_summary(directory))
    if not rows:
        print("error: summaries contain no runs", file=sys.stderr)
        return 1
    out = args.out or args.dirs[0]
    os.makedirs(out, exist_ok=True)
    problems = sorted({row["problem"] for row in rows})
    written = []
    for problem in problems:
        prows = [r for r in rows if r["problem"] == problem]
        methods = sorted({r["method"] for r in prows})
        tols = sorted({float(r["tol"]) for r in prows}, reverse=True)
        table = {(r["method"], float(r["tol"])): r for r in prows}
        for metric, suffix in (("min_rel_err", "err_vs_tol"),
                               ("time_s", "time_vs_tol")):
            path = os.path.join(out, f"{problem}_{suffix}.dat")
            with open(path, "w") as fh:
                fh.write("# tol " + " ".join(methods) + "\n")
                for tol in tols:
                    cells = [f"{tol:.6g}"]
                    for method in methods:
                        row = table.get((method, tol))
                        cells.append(f"{float(row[metric]):.6g}"
                                     if row else "nan")
                    fh.write(" ".join(cells) + "\n")
            written.append((problem, suffix, path, methods))
    script = os.path.join(out, "plot.gp")
    with open(script, "w") as fh:
        fh.write("set logscale x\nset xlabel 'tolerance'\nset key top left\n")
        for problem, suffix, path, methods in written:
            ylabel = ("relative error" if suffix == "err_vs_tol"
                      else "time (s)")
            fh.write(f"\nset ylabel '{ylabel}'\n")
            fh.write(f"set title '{problem}'\n")
            parts = [f"'{os.path.basename(path)}' using 1:{i + 2} "
                     f"with linespoints title '{m}'"
                     for i, m in enumerate(methods)]
            fh.write("plot " + ", \\\n     ".join(parts) + "\n")
            fh.write("pause -1\n")
    for _, _, path, _ in written:
        print(f"wrote {path}")
    print(f"wrote {script}")
    return 0


# ---------------------------------------------------------------- parser


def _add_common_flags(p):
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--problem", metavar="NAME",
                   help="'phantom', an image file, or a bundle directory")
    p.add_argument("--size", type=int, help="phantom grid size")
    p.add_argument("--variant", choices=("original", "modified"),
                   help="phantom intensity table")
    p.add_argument("--blur", choices=("gaussian", "motion", "disk"))
    p.add_argument("--sigma", type=float, help="gaussian blur width")
    p.add_argument("--psf-size", dest="psf_size", type=int,
                   help="gaussian support size (0 = full image)")
    p.add_argument("--len", dest="length", type=float,
                   help="motion blur length")
    p.add_argument("--angle", type=float, help="motion blur angle (deg)")
    p.add_argument("--radius", type=float, help="out-of-focus disk radius")
    p.add_argument("--snr", type=float, help="target SNR (dB)")
    p.add_argument("--seed", type=int)
    p.add_argument("--background", type=float)
    p.add_argument("--out", metavar="DIR", help="output directory")


def _add_solver_flags(p):
    p.add_argument("--method", help="acquire, sgp, or both")
    p.add_argument("--lambda", dest="lambda", type=float,
                   help="regularization weight")
    p.add_argument("--mu", type=float, help="Huber smoothing threshold")
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float, help="inner stop ratio")
    p.add_argument("--inner-iters", dest="inner_max_iters", type=int,
                   help="inner iteration cap (0 = uncapped)")
    p.add_argument("--tol", type=_parse_tol_list, metavar="LIST",
                   help="comma-separated tolerances, strictly decreasing")
    p.add_argument("--constraint", choices=("s1", "s2"))
    p.add_argument("--start", choices=("auto", "observed", "flat"))
    p.add_argument("--max-time", dest="max_time", type=float,
                   help="wall-clock budget per run (s)")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--monotone", action="store_const", const=True,
                   default=None, help="monotone line search")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poissontv",
        description="TV-regularized Poisson image restoration benchmark")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write a problem bundle")
    _add_common_flags(p)
    p.add_argument("--lambda", dest="lambda", type=float,
                   help="regularization hint recorded in the bundle")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="one solver run")
    _add_common_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="tolerance sweep")
    _add_common_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="plot data from sweep results")
    p.add_argument("dirs", nargs="+", metavar="DIR",
                   help="sweep output directories")
    p.add_argument("--out", metavar="DIR",
                   help="where to write plot files (default: first DIR)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
