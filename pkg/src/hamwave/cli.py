"""Command-line front end: runs, sweeps and the CSV/JSON reports.

Exit codes: 0 when every step of every run converged, 2 when some step was
flagged non-converged, 1 on any error (bad config, failed factorization, a
file that fails ``--check``).
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import math
import os
from pathlib import Path
import sys
import warnings

import numpy as np

from . import config as configmod
from .errors import HamwaveError, InvalidArgument
from .problems import PROBLEM_IDS, builtin
from .timestepper import initialize, run

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2

# header of every file the tool writes, with the type of each column
SCHEMAS = {
    "steps.csv": [
        ("step", int), ("time", float), ("l2_error", float), ("energy_error", float),
        ("iterations", int), ("lambda", float), ("converged", bool),
    ],
    "tol_sweep.csv": [
        ("tol", float), ("l2", float), ("energy_err_alpha", float), ("energy_err_uv", float),
        ("iterations", int), ("cpu", float),
    ],
    "time_conv.csv": [("tau", float), ("l2", float), ("rate", float), ("cpu", float)],
    "space_conv.csv": [("m", int), ("gamma", float), ("n_Z", int), ("h_Z", float), ("l2", float)],
    "compare.csv": [
        ("method", str), ("cpu", float), ("total_iterations", int),
        ("final_l2", float), ("final_energy_err", float),
    ],
}
SUMMARY_KEYS = ("total_iterations", "cpu_seconds", "final_l2", "final_energy_error", "converged")


def fmt(x):
    """Errors and times in scientific notation with 5 significant digits."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.4e}"


def _fixed(x):
    return "-" if x is None else f"{x:.2f}"


def write_csv(path, rows):
    name = Path(path).name
    header = [c for c, _ in SCHEMAS[name]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row[c]) for c in header])


def _parse_cell(text, kind):
    if text == "":
        if kind in (int, bool, str):
            raise ValueError("empty cell")
        return None
    if kind is bool:
        if text not in ("true", "false"):
            raise ValueError(f"{text!r} is not a boolean")
        return text == "true"
    return kind(text)


def read_csv(path):
    """Read one of the tool's CSV files back, checking it against its schema."""
    path = Path(path)
    schema = SCHEMAS.get(path.name)
    if schema is None:
        raise InvalidArgument(f"no schema for {path.name}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != [c for c, _ in schema]:
        raise InvalidArgument(f"{path}: header does not match {[c for c, _ in schema]}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(schema):
            raise InvalidArgument(f"{path}:{lineno}: expected {len(schema)} fields, got {len(row)}")
        try:
            out.append({c: _parse_cell(v, kind) for (c, kind), v in zip(schema, row)})
        except ValueError as exc:
            raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
    return out


def check_summary(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    missing = [k for k in SUMMARY_KEYS if k not in data]
    if missing:
        raise InvalidArgument(f"{path}: missing keys {missing}")
    return data


def check_outputs(directory):
    """Validate every known output file under ``directory``; returns the count."""
    count = 0
    for path in sorted(Path(directory).rglob("*")):
        if path.name in SCHEMAS:
            read_csv(path)
            count += 1
        elif path.name == "summary.json":
            check_summary(path)
            count += 1
    return count


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_run(directory, report):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = [
        {
            "step": r.step, "time": r.time, "l2_error": r.l2_error, "energy_error": r.energy_error,
            "iterations": r.iterations, "lambda": r.lam, "converged": r.converged,
        }
        for r in report.records
    ]
    write_csv(directory / "steps.csv", rows)
    with open(directory / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_json_ready(report.summary()), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _execute(job):
    """Worker body: one run, written into its own directory."""
    run_cfg, directory = job
    report = run(run_cfg.problem, run_cfg)
    if directory is not None:
        write_run(directory, report)
    report.alpha = np.asarray(report.alpha)
    return report


def workers():
    raw = os.environ.get("HAMWAVE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"HAMWAVE_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise InvalidArgument("HAMWAVE_THREADS must be at least 1")
    return n


def run_many(jobs):
    """Run jobs in order, in parallel when HAMWAVE_THREADS > 1."""
    n = min(workers(), len(jobs))
    if n <= 1:
        return [_execute(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_execute, jobs))


def _status(reports):
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NONCONVERGED


def _out_dir(args, cfg):
    out = args.out or cfg.directory
    if out is None:
        raise InvalidArgument("no output directory: pass --out or set [output] directory")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _floats(text, name):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidArgument(f"--{name} must be a comma-separated list of numbers") from None
    if not values:
        raise InvalidArgument(f"--{name} is empty")
    return values


def _ints(text, name):
    values = _floats(text, name)
    if any(v != int(v) for v in values):
        raise InvalidArgument(f"--{name} must contain integers")
    return [int(v) for v in values]


def cmd_run(args):
    cfg = configmod.load(args.config)
    out = _out_dir(args, cfg)
    (report,) = run_many([(cfg.run, out)])
    s = report.summary()
    print(
        f"{cfg.run.problem} {cfg.run.scheme}: {s['steps']} steps, {s['total_iterations']} iterations, "
        f"final L2 {fmt(s['final_l2']) or '-'}, final energy error {fmt(s['final_energy_error'])}"
    )
    return _status([report])


def cmd_sweep_tol(args):
    cfg = configmod.load(args.config)
    out = _out_dir(args, cfg)
    tols = _floats(args.tols, "tols") if args.tols else [cfg.run.solver.tol]
    jobs = [(cfg.with_solver(tol=t).run, out / f"tol_{t:.0e}") for t in tols]
    reports = run_many(jobs)
    rows = [
        {
            "tol": t, "l2": r.final_l2, "energy_err_alpha": r.final_energy_error,
            "energy_err_uv": r.final_energy_error_uv, "iterations": r.total_iterations, "cpu": r.cpu_seconds,
        }
        for t, r in zip(tols, reports)
    ]
    write_csv(out / "tol_sweep.csv", rows)
    for row in rows:
        print(f"tol {fmt(row['tol'])}: L2 {fmt(row['l2'])}, energy error {fmt(row['energy_err_alpha'])}, "
              f"iterations {row['iterations']}")
    return _status(reports)


def convergence_rates(steps, errors):
    """Observed order between consecutive rows: log(e_prev / e) / log(h_prev / h)."""
    rates = [None]
    for (h0, e0), (h1, e1) in zip(zip(steps, errors), zip(steps[1:], errors[1:])):
        if h0 == h1:
            warnings.warn(f"repeated step size {h1}; rate set to 0")
            rates.append(0.0)
        elif not (e0 and e1) or e0 <= 0 or e1 <= 0:
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def cmd_converge_time(args):
    cfg = configmod.load(args.config)
    out = _out_dir(args, cfg)
    taus = _floats(args.taus, "taus") if args.taus else [cfg.run.tau]
    jobs = []
    for tau in taus:
        steps = cfg.run.T / tau
        jobs.append((cfg.with_run(tau=tau, record_every=max(1, int(round(steps)))).run, out / f"tau_{tau:g}"))
    reports = run_many(jobs)
    errors = [r.final_l2 for r in reports]
    rates = convergence_rates(taus, errors)
    rows = [
        {"tau": t, "l2": e, "rate": q, "cpu": r.cpu_seconds}
        for t, e, q, r in zip(taus, errors, rates, reports)
    ]
    write_csv(out / "time_conv.csv", rows)
    for row in rows:
        print(f"tau {row['tau']:g}: L2 {fmt(row['l2'])}, rate {_fixed(row['rate'])}")
    return _status(reports)


def fit_slope(h, errors):
    """Least-squares slope of log(error) against log(h)."""
    h, e = np.asarray(h, dtype=float), np.asarray(errors, dtype=float)
    if len(h) < 2:
        return None
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def cmd_converge_space(args):
    cfg = configmod.load(args.config)
    out = _out_dir(args, cfg)
    nzs = _ints(args.nz, "nz") if args.nz else [cfg.run.n_Z]
    gammas = _floats(args.gammas, "gammas") if args.gammas else [cfg.run.gamma]
    ms = _ints(args.m, "m") if args.m else [cfg.run.m]
    cases, jobs = [], []
    for m in ms:
        for g in gammas:
            for n in nzs:
                c = cfg.with_run(m=m, gamma=g, n_Z=n, record_every=cfg.run.steps)
                cases.append((m, g, n))
                jobs.append((c.run, out / f"m{m}_g{g:g}_n{n}"))
    reports = run_many(jobs)
    rows = []
    for (m, g, n), job, rep in zip(cases, jobs, reports):
        _, sim = initialize(job[0].problem, job[0])
        rows.append({"m": m, "gamma": g, "n_Z": n, "h_Z": sim.system.h, "l2": rep.final_l2})
    write_csv(out / "space_conv.csv", rows)
    for m in ms:
        for g in gammas:
            sel = [r for r in rows if r["m"] == m and r["gamma"] == g]
            slope = fit_slope([r["h_Z"] for r in sel], [r["l2"] for r in sel])
            print(f"m={m} gamma={g:g}: slope {_fixed(slope)}")
    return _status(reports)


def cmd_compare(args):
    cfg = configmod.load(args.config)
    out = _out_dir(args, cfg)
    methods = ("newton", "secant")
    jobs = [(cfg.with_solver(method=m).run, out / m) for m in methods]
    reports = run_many(jobs)
    rows = [
        {
            "method": m, "cpu": r.cpu_seconds, "total_iterations": r.total_iterations,
            "final_l2": r.final_l2, "final_energy_err": r.final_energy_error,
        }
        for m, r in zip(methods, reports)
    ]
    write_csv(out / "compare.csv", rows)
    a, b = reports[0].alpha, reports[1].alpha
    rel = float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.finfo(float).tiny))
    for row in rows:
        print(f"{row['method']}: cpu {row['cpu']:.2f} s, iterations {row['total_iterations']}, "
              f"final energy error {fmt(row['final_energy_err'])}")
    print(f"relative difference of final coefficients: {rel:.3e}")
    return _status(reports)


def cmd_list_problems(args):
    for pid in PROBLEM_IDS:
        p = builtin(pid)
        print(f"{pid}  {p.description}  (T = {p.default_T:g}, {p.bc})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hamwave",
        description="Energy-conserving kernel collocation for nonlinear wave equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="INI experiment file")
            p.add_argument("--out", help="output directory (overrides [output] directory)")
            p.add_argument("--check", action="store_true", help="validate the written files on read-back")
        p.set_defaults(func=func)
        return p

    add("run", cmd_run, "one simulation: steps.csv and summary.json")
    p = add("sweep-tol", cmd_sweep_tol, "one run per energy tolerance: tol_sweep.csv")
    p.add_argument("--tols", help="comma-separated tolerances, e.g. 1e-2,1e-4")
    p = add("converge-time", cmd_converge_time, "temporal convergence: time_conv.csv")
    p.add_argument("--taus", help="comma-separated time steps")
    p = add("converge-space", cmd_converge_space, "spatial convergence: space_conv.csv")
    p.add_argument("--nz", help="comma-separated numbers of trial centers")
    p.add_argument("--gammas", help="comma-separated oversampling ratios")
    p.add_argument("--m", help="comma-separated kernel smoothness orders")
    add("compare", cmd_compare, "Newton against secant multiplier updates: compare.csv")
    add("list-problems", cmd_list_problems, "show the built-in problems", needs_config=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
        if getattr(args, "check", False):
            cfg = configmod.load(args.config)
            n = check_outputs(args.out or cfg.directory)
            print(f"check: {n} files valid")
    except (HamwaveError, OSError, json.JSONDecodeError) as exc:
        print(f"hamwave: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
