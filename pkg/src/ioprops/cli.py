"""Command-line experiment runner.

    ioprops run <config> [--out DIR] [--seed N]
    ioprops compare <config> [--out DIR] [--seed N]
    ioprops truth <plant-file> [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 sample budget exhausted,
4 divergence or numerical breakdown. The default output directory comes
from ``IOPROPS_OUT`` when neither ``--out`` nor ``[run] out`` is given.
"""

import argparse
import csv
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__, spectra
from .config import build_plant, load_config, read_sections, resolve_path, write_meta
from .conic import estimate_cone
from .errors import (
    BudgetExhausted,
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    FlowError,
    SingularOperatorError,
)
from .estimator import format_float
from .gain import estimate_gain
from .passivity import estimate_passivity
from .probe import ProbeSession

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_DIVERGED = 0, 2, 3, 4
ESTIMATORS = {"gain": estimate_gain, "passivity": estimate_passivity, "cone": estimate_cone}
SUMMARY_COLUMNS = ["quantity", "method", "estimate", "truth", "rel_error", "samples_used", "iterations"]
TRUTH_TOL = {"gamma": 1e-9, "s": 1e-9, "nu": 1e-9, "c_star": 1e-7, "r_min": 1e-7}


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format_float(x)


def rel_error(est, truth):
    if truth is None or est is None or not np.isfinite(est):
        return None
    # absolute error when the truth is numerically zero
    return abs(est - truth) / abs(truth) if abs(truth) >= 1e-8 else abs(est - truth)


def compute_truth(plant, props):
    """Ground-truth values keyed like the summary quantities."""
    out = {}
    if "gain" in props:
        out["gamma"] = spectra.true_gain(plant)[0]
    if "passivity" in props:
        out["s"], out["nu"] = spectra.true_passivity(plant)
    if "cone" in props:
        out["c"], out["r"] = spectra.true_cone(plant)
    return out


def _summaries(prop, method, est, trace, samples):
    iters = len(trace) if trace is not None else 0
    last = trace.rows[-1] if trace is not None and len(trace) else None
    if prop == "gain":
        value = est.gamma_hat if est is not None else (last[2] if last else None)
        return [("gamma", method, value, samples, iters)]
    if prop == "passivity":
        value = est.s_hat if est is not None else (last[2] if last else None)
        rows = [("s", method, value, samples, iters)]
        if est is not None and est.nu_hat is not None:
            rows.append(("nu", method, est.nu_hat, samples, len(est.nu_trace)))
        return rows
    if est is not None:
        c, r = est.c_hat, est.r_hat
    else:
        c, r = (last[5], last[6]) if last else (None, None)
    return [("c", method, c, samples, iters), ("r", method, r, samples, iters)]


def _write_traces(out, traces):
    if len(traces) == 1:
        (_, trace), = traces.items()
        trace.to_csv(out / "trace.csv")
        return
    header = ["quantity", "k", "rho", "estimate", "alpha", "samples", "c", "r"]
    rows = []
    for prop, trace in traces.items():
        for row in trace.rows:
            extra = row[5:] if trace.with_cone else (None, None)
            rows.append([prop, row[0]] + [_cell(v) for v in row[1:4]] + [row[4]] + [_cell(v) for v in extra])
    _write_csv(out / "trace.csv", header, rows)


def cmd_run(config, out=None, seed=None):
    try:
        exp = load_config(config, seed=seed, out=out)
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    out_dir = Path(exp.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        truth = compute_truth(exp.plant, exp.properties) if exp.validate else {}
    except SingularOperatorError as exc:
        _err(f"plant unsuitable for validation: {exc}")
        return EXIT_CONFIG

    status = EXIT_OK
    traces, summary = {}, []
    for i, prop in enumerate(exp.properties):
        cfg = exp.estimators[prop]
        noise = dataclasses.replace(exp.noise, seed=exp.seed + i)
        session = ProbeSession(exp.plant, noise, exp.budget)
        est, trace = None, None
        try:
            est = ESTIMATORS[prop](session, cfg)
            trace = est.trace
        except BudgetExhausted as exc:
            _err(f"{prop}: sample budget exhausted after {exc.samples_used} samples")
            trace, status = exc.trace, EXIT_BUDGET
        except DivergenceError as exc:
            _err(f"{prop}: {exc}")
            trace, status = exc.trace, EXIT_DIVERGED
        except (DegenerateInputError, FlowError, ArithmeticError) as exc:
            _err(f"{prop}: {exc}")
            status = EXIT_DIVERGED
        except ValueError as exc:
            _err(f"{prop}: {exc}")
            return EXIT_CONFIG
        if trace is not None and len(trace):
            traces[prop] = trace
        for q, method, value, samples, iters in _summaries(prop, cfg.method, est, trace, session.samples_used):
            t = truth.get(q)
            summary.append([q, method, _cell(value), _cell(t), _cell(rel_error(value, t)), samples, iters])
            print(f"{q}: {_cell(value)}" + (f" (truth {_cell(t)})" if t is not None else "")
                  + f" [{method}, {samples} samples]")
        if status != EXIT_OK:
            break

    if traces:
        _write_traces(out_dir, traces)
    _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary)
    write_meta(exp.resolved, out_dir / "meta.ini", __version__)
    if exp.figures:
        from .plotting import plot_trace

        for prop, trace in traces.items():
            key = {"gain": "gamma", "passivity": "s", "cone": "r"}[prop]
            plot_trace(trace, out_dir / f"trace_{prop}.png", prop, truth.get(key), truth.get("c"))
    return status


def cmd_compare(config, out=None, seed=None):
    try:
        exp = load_config(config, seed=seed, out=out)
        if exp.compare is None:
            raise ConfigError("compare needs a [compare] section")
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    cmp_ = exp.compare
    prop = cmp_["property"]
    try:
        truth = compute_truth(exp.plant, (prop,))
    except SingularOperatorError as exc:
        _err(f"plant unsuitable for validation: {exc}")
        return EXIT_CONFIG
    key = {"gain": "gamma", "passivity": "s", "cone": "r"}[prop]
    out_dir = Path(exp.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in cmp_["methods"]:
        for budget in cmp_["budgets"]:
            cfg = dataclasses.replace(cmp_["configs"][method], max_samples=budget, rel_tol=0.0, grad_tol=0.0)
            session = ProbeSession(exp.plant, dataclasses.replace(exp.noise, seed=exp.seed), budget)
            value = None
            try:
                est = ESTIMATORS[prop](session, cfg)
                value = est.estimate
            except BudgetExhausted as exc:
                if exc.trace is not None and len(exc.trace):
                    value = exc.trace.rows[-1][2]
            except (DivergenceError, DegenerateInputError, FlowError, ArithmeticError) as exc:
                _err(f"{method} at budget {budget}: {exc}")
            rows.append({"method": method, "budget": budget, "estimate": value, "truth": truth[key],
                         "rel_error": rel_error(value, truth[key]), "samples_used": session.samples_used})
    _write_csv(out_dir / "compare.csv", ["method", "budget", "estimate", "truth", "rel_error", "samples_used"],
               [[r["method"], r["budget"], _cell(r["estimate"]), _cell(r["truth"]), _cell(r["rel_error"]),
                 r["samples_used"]] for r in rows])
    write_meta(exp.resolved, out_dir / "meta.ini", __version__)
    if exp.figures:
        from .plotting import plot_compare

        plot_compare([r for r in rows if r["rel_error"] is not None], out_dir / "compare.png", prop)
    for r in rows:
        print(f"{r['method']} budget={r['budget']}: rel_error={_cell(r['rel_error'])}")
    return EXIT_OK


def truth_rows(plant, plant_id):
    """Golden-format rows ``(plant_id, property, value, tolerance)``."""
    rows = [("gamma", spectra.true_gain(plant)[0])]
    try:
        s, nu = spectra.true_passivity(plant)
        rows += [("s", s), ("nu", nu)]
    except SingularOperatorError:
        pass
    c, r = spectra.true_cone(plant)
    rows += [("c_star", c), ("r_min", r)]
    return [(plant_id, name, value, TRUTH_TOL[name]) for name, value in rows]


def cmd_truth(plant_file, out=None):
    try:
        path = resolve_path(plant_file)
        secs = read_sections(path)
        if "plant" not in secs:
            raise ConfigError(f"{path}: missing [plant] section")
        plant, pid = build_plant(secs["plant"], path.parent)
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    rows = [[pid, name, _cell(v), _cell(t)] for pid, name, v, t in truth_rows(plant, pid)]
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([["plant_id", "property", "value", "tolerance"]] + rows)
    sys.stdout.write(buf.getvalue())
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "truth.csv").write_text(buf.getvalue())
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ioprops", description="Black-box estimation of system input-output properties.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the estimators of a config"), ("compare", "accuracy against sample budget")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (default: [run] out, then $IOPROPS_OUT)")
        p.add_argument("--seed", type=int, help="noise seed, overrides [run] seed")
    p = sub.add_parser("truth", help="white-box reference values for a plant file")
    p.add_argument("plant_file")
    p.add_argument("--out", help="also write truth.csv here")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed)
    if args.command == "compare":
        return cmd_compare(args.config, args.out, args.seed)
    return cmd_truth(args.plant_file, args.out)


if __name__ == "__main__":
    sys.exit(main())
