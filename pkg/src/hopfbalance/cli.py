"""Command-line front end.

Subcommands ``hopf``, ``coeffs``, ``classify`` and ``compare`` write CSV or
JSON files plus a ``manifest.json`` into the output directory.  Outputs are
deterministic: identical arguments give byte-identical CSV and JSON files.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CapabilityError, CodimensionOverflowError, ConvergenceError,
                     DegeneracyError, DegenerateFrequencyError, DimensionError,
                     HopfBalanceError, IllConditionedError, IndeterminateOrderError,
                     ModelParseError, MultiplicityError, ProjectionError, ResonanceError,
                     SingularityError, TrackingError, ValidationError)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOTHING = 3
EXIT_OBSTRUCTION = 4
EXIT_INTERNAL = 5

_INPUT_ERRORS = (ModelParseError, ValidationError, DimensionError, CapabilityError,
                 FileNotFoundError, ValueError)
_NOTHING_ERRORS = (ConvergenceError, DegenerateFrequencyError, TrackingError)
_OBSTRUCTIONS = (ResonanceError, ProjectionError, DegeneracyError, SingularityError,
                 MultiplicityError, CodimensionOverflowError, IndeterminateOrderError,
                 IllConditionedError)


class UsageError(Exception):
    pass


class NothingFound(Exception):
    pass


def fmt(x):
    """Float formatting that round-trips."""
    return "%.17g" % float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# argument handling

def _parse_assign(text, flag):
    if "=" not in text:
        raise UsageError(f"{flag} expects name=value, got {text!r}")
    name, value = text.split("=", 1)
    return name.strip(), value.strip()


def _float(text, what):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{what}: {text!r} is not a number")


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--range expects lo:hi:step, got {text!r}")
    lo, hi, step = (_float(p, "--range") for p in parts)
    if step <= 0:
        raise UsageError("--range step must be positive")
    return lo, hi, step


def _range_values(lo, hi, step):
    if hi < lo:
        return np.array([])
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _parse_params(items):
    """``--param`` values: plain numbers or grids ``lo:hi:n``."""
    scalars, grids = {}, {}
    for item in items or []:
        name, value = _parse_assign(item, "--param")
        if ":" in value:
            parts = value.split(":")
            if len(parts) != 3:
                raise UsageError(f"grid for {name} must be lo:hi:n")
            lo, hi = _float(parts[0], name), _float(parts[1], name)
            try:
                n = int(parts[2])
            except ValueError:
                raise UsageError(f"grid for {name}: count must be an integer")
            if n < 1:
                raise UsageError(f"grid for {name}: count must be positive")
            grids[name] = np.linspace(lo, hi, n)
        else:
            scalars[name] = _float(value, name)
    return scalars, grids


def _threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get("HOPFBALANCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError("HOPFBALANCE_THREADS must be an integer")
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="hopfbalance",
                                description="Harmonic-balance analysis of Hopf bifurcations "
                                            "in delay differential equations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", required=True, help="model file or builtin name")
        sp.add_argument("--param", action="append", default=[], metavar="NAME=VAL",
                        help="parameter override (repeatable); NAME=lo:hi:n gives a grid")
        sp.add_argument("--fix", metavar="NAME=VAL",
                        help="parameter held fixed while solving (tau or the bifurcation "
                             "parameter)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--svg", action="store_true", help="also write an SVG plot")

    sp = sub.add_parser("hopf", help="critical points and Hopf curves")
    common(sp)
    sp.add_argument("--range", help="lo:hi:step sweep of the fixed parameter")
    sp.add_argument("--guess", help="omega:free initial guess")

    sp = sub.add_parser("coeffs", help="harmonic-balance coefficients at a critical point")
    common(sp)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--guess", help="omega:free initial guess")

    sp = sub.add_parser("classify", help="normal-form classification over a parameter grid")
    common(sp)
    sp.add_argument("--q", type=int, default=3)
    sp.add_argument("--guess", help="omega:free initial guess")
    sp.add_argument("--refine", choices=("brent", "linear"), default="brent")

    sp = sub.add_parser("compare", help="predicted versus simulated cycle amplitudes")
    common(sp)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--range", help="lo:hi:step range of the bifurcation parameter")
    sp.add_argument("--guess", help="omega:free initial guess")
    sp.add_argument("--sim-dt", type=float, default=None)
    sp.add_argument("--sim-transient", type=float, default=2000.0)
    sp.add_argument("--sim-measure", type=float, default=500.0)
    return p


def _aux_shorthand(argv, parser):
    """Rewrite ``--<aux> value`` into ``--param <aux>=value``."""
    out = []
    known = {a for action in _all_actions(parser) for a in action.option_strings}
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and a not in known and "=" not in a and i + 1 < len(argv):
            out += ["--param", f"{a[2:]}={argv[i + 1]}"]
            i += 2
            continue
        if a.startswith("--") and "=" in a and a.split("=", 1)[0] not in known:
            out += ["--param", a[2:]]
            i += 1
            continue
        out.append(a)
        i += 1
    return out


def _all_actions(parser):
    acts = list(parser._actions)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                acts += sp._actions
    return acts


# ---------------------------------------------------------------------------
# shared setup

def _load(args):
    from .model import load_model
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = load_model(args.model)
    scalars, grids = _parse_params(args.param)
    unknown = [k for k in list(scalars) + list(grids)
               if k not in r.aux and k not in ("tau", r.mu_name, "mu")]
    if unknown:
        raise UsageError(f"unknown parameter(s) for model {r.name!r}: {', '.join(unknown)}")
    return r, scalars, grids


def _fixed(args, r):
    if not args.fix:
        return "tau", None
    name, value = _parse_assign(args.fix, "--fix")
    if name not in ("tau", "mu", r.mu_name):
        raise UsageError(f"--fix must name tau or {r.mu_name}")
    return ("tau" if name == "tau" else "mu"), _float(value, "--fix")


def _guess(args):
    if not getattr(args, "guess", None):
        return None
    parts = args.guess.split(":")
    if len(parts) != 2:
        raise UsageError("--guess expects omega:free")
    return tuple(_float(x, "--guess") for x in parts)


def _rho(scalars, r):
    rho = {k: v for k, v in scalars.items() if k not in (r.mu_name, "mu")}
    return rho


def _critical(r, args, scalars):
    from .hopf import find_critical
    fixed = _fixed(args, r)
    if fixed[1] is None and fixed[0] == "tau" and "tau" in scalars:
        fixed = ("tau", scalars["tau"])
    return find_critical(r, _rho(scalars, r), fixed, guess=_guess(args))


def manifest(args, argv, outputs):
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    core = {"command": args.command, "model": args.model, "argv": list(argv),
            "parameters": sorted(args.param), "fix": args.fix,
            "options": {k: v for k, v in sorted(vars(args).items())
                        if k not in ("command", "model", "param", "fix", "out", "threads")},
            "tool_version": __version__, "outputs": sorted(outputs)}
    digest = hashlib.sha256(json.dumps(_jsonable(core), sort_keys=True).encode()).hexdigest()
    return {**core, "manifest_id": digest, "output_dir": str(args.out),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))}


def _svg_lines(path, series, xlabel, ylabel):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib is not installed; skipping SVG output", stacklevel=2)
        return False
    plt.rcParams["svg.hashsalt"] = "hopfbalance"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y, style) in series.items():
        ax.plot(x, y, style, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if series:
        ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


# ---------------------------------------------------------------------------
# subcommands

def cmd_hopf(args, out):
    from .hopf import hopf_curve
    r, scalars, _ = _load(args)
    name, value = _fixed(args, r)
    rho = _rho(scalars, r)
    rows = []
    if args.range:
        lo, hi, step = _parse_range(args.range)
        curve = hopf_curve(r, rho, name, (lo, hi), step, guess=_guess(args))
        for cp in curve.points:
            pval = cp.tau0 if name == "tau" else cp.mu0
            rows.append((pval, cp.omega0, cp.mu0, cp.tau0, int(cp.nondegenerate)))
    else:
        if value is None and name == "tau":
            value = scalars.get("tau")
        cp = _critical(r, args, scalars)
        pval = cp.tau0 if name == "tau" else cp.mu0
        rows.append((pval, cp.omega0, cp.mu0, cp.tau0, int(cp.nondegenerate)))
    if not rows:
        raise NothingFound("no critical point in the requested range")
    write_csv(out / "hopf_curve.csv", ["param", "omega", "mu", "tau", "nondegenerate"], rows)
    files = ["hopf_curve.csv"]
    if args.svg:
        arr = np.array(rows, dtype=float)
        if _svg_lines(out / "hopf_curve.svg", {"mu": (arr[:, 0], arr[:, 2], "-")},
                      "param", "mu"):
            files.append("hopf_curve.svg")
    return files


def _complex_list(values):
    return [{"re": float(np.real(x)), "im": float(np.imag(x))} for x in values]


def cmd_coeffs(args, out):
    from .bifexpand import expand_amplitude
    from .hbalance import extract_xi, solve_harmonics
    if not 1 <= args.q <= 3:
        raise UsageError("--q must be between 1 and 3")
    r, scalars, _ = _load(args)
    cp = _critical(r, args, scalars)
    hs = solve_harmonics(r, cp, args.q)
    bif = extract_xi(r, hs)
    a = {}
    for j in range(0, 2 * args.q + 1):
        a[str(j)] = {str(k): _complex_list(hs.coeffs[j, k]) for k in range(hs.coeffs.shape[1])
                     if np.any(hs.coeffs[j, k] != 0)}
    doc = {"model": r.name, "q": args.q,
           "point": {"omega": cp.omega0, "mu": cp.mu0, "tau": cp.tau0,
                     "rho": dict(sorted(cp.rho.items())) if cp.rho else {},
                     "nondegenerate": cp.nondegenerate,
                     "transversality": cp.transversality},
           "lambda_hat": _complex_list([bif.lambda_hat])[0],
           "v": _complex_list(cp.eig.v), "w": _complex_list(cp.eig.w),
           "xi": _complex_list(bif.xi), "a": a}
    try:
        be = expand_amplitude(r, cp, args.q)
        doc["expansion"] = {"mu_k": list(be.mu_k), "omega_k": list(be.omega_k),
                            "fit_residual_mu": be.fit_diagnostics.get("residual_mu"),
                            "fit_residual_omega": be.fit_diagnostics.get("residual_omega")}
    except HopfBalanceError as exc:
        doc["expansion"] = {"error": f"{type(exc).__name__}: {exc}"}
    write_json(out / "coeffs.json", doc)
    return ["coeffs.json"]


def cmd_classify(args, out):
    from .bifexpand import expand_amplitude
    from .singclass import classify_amplitude, scan_varieties
    if not 1 <= args.q <= 3:
        raise UsageError("--q must be between 1 and 3")
    r, scalars, grids = _load(args)
    rho = _rho(scalars, r)
    files = []
    if not grids:
        cp = _critical(r, args, scalars)
        be = expand_amplitude(r, cp, args.q)
        rep = classify_amplitude(be)
        write_json(out / "report.json", {"model": r.name, "point": {
            "omega": cp.omega0, "mu": cp.mu0, "tau": cp.tau0}, "mu_k": list(be.mu_k),
            "report": rep.as_dict()})
        write_csv(out / "varieties.csv", ["p1", "p2", "variety"], [])
        return ["report.json", "varieties.csv"]
    if len(grids) != 2:
        raise UsageError("classify needs exactly two grid parameters (NAME=lo:hi:n)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scan = scan_varieties(r, grids, q=args.q, rho=rho, guess=_guess(args),
                              refine=args.refine, workers=_threads(args.threads))
    cells = []
    for (i, j), rep, err in scan.reports:
        cells.append({"index": [i, j], scan.names[0]: scan.axes[0][i],
                      scan.names[1]: scan.axes[1][j],
                      "mu_k": list(scan.coefficients[i, j][:args.q]),
                      "report": rep, "error": err})
    doc = {"model": r.name, "grid": {n: list(a) for n, a in zip(scan.names, scan.axes)},
           "q": args.q, "cells": cells, "triple_points": scan.triple_points,
           "warnings": sorted({str(w.message) for w in caught})}
    write_json(out / "report.json", doc)
    rows = []
    for name in sorted(scan.contours):
        for p1, p2 in scan.contours[name]:
            rows.append((float(p1), float(p2), name))
    write_csv(out / "varieties.csv", ["p1", "p2", "variety"], rows)
    files = ["report.json", "varieties.csv"]
    if args.svg:
        series = {}
        styles = {"H0": "o", "H1": "s", "D": "^"}
        for name in sorted(scan.contours):
            pts = np.array(scan.contours[name], dtype=float).reshape(-1, 2)
            series[name] = (pts[:, 0], pts[:, 1], styles.get(name, "."))
        if _svg_lines(out / "diagrams.svg", series, scan.names[0], scan.names[1]):
            files.append("diagrams.svg")
    return files


def cmd_compare(args, out):
    from .bifexpand import expand_amplitude
    from .ddesim import SimConfig, amplitude_branch, predict_cycle
    if not 1 <= args.q <= 3:
        raise UsageError("--q must be between 1 and 3")
    r, scalars, _ = _load(args)
    header = ["mu", "theta_pred", "amp_pred", "amp_sim", "freq_pred", "freq_sim", "converged"]
    grid = _range_values(*_parse_range(args.range)) if args.range else np.array([])
    if grid.size == 0:
        write_csv(out / "branch.csv", header, [])
        return ["branch.csv"]
    cp = _critical(r, args, scalars)
    be = expand_amplitude(r, cp, args.q)
    dt = args.sim_dt if args.sim_dt is not None else cp.tau0 / 50
    cfg = SimConfig(dt=dt, t_transient=args.sim_transient, t_measure=args.sim_measure,
                    perturbation=0.1)
    sims = amplitude_branch(r, grid, cp.tau0, cp.rho, cfg, q=args.q)
    rows = []
    nan = float("nan")
    for mu, m in zip(grid, sims):
        pred = predict_cycle(r, be, float(mu))
        th, ap, fp = (pred["theta"], float(pred["amplitude"][0]), pred["omega"]) if pred \
            else (nan, nan, nan)
        rows.append((float(mu), th, ap, float(m.amplitude[0]), fp, float(m.frequency),
                     int(m.converged)))
    write_csv(out / "branch.csv", header, rows)
    files = ["branch.csv"]
    if args.svg:
        arr = np.array(rows, dtype=float)
        if _svg_lines(out / "branch.svg", {"predicted": (arr[:, 0], arr[:, 2], "-"),
                                           "simulated": (arr[:, 0], arr[:, 3], "o")},
                      "mu", "amplitude"):
            files.append("branch.svg")
    return files


COMMANDS = {"hopf": cmd_hopf, "coeffs": cmd_coeffs, "classify": cmd_classify,
            "compare": cmd_compare}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_aux_shorthand(argv, parser))
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    out = Path(args.out)
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, out)
        write_json(out / "manifest.json", manifest(args, argv, files))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NothingFound as exc:
        print(f"nothing found: {exc}", file=sys.stderr)
        return EXIT_NOTHING
    except _OBSTRUCTIONS as exc:
        extra = f" (harmonic j={exc.harmonic})" if isinstance(exc, ResonanceError) else ""
        print(f"obstruction: {type(exc).__name__}: {exc}{extra}", file=sys.stderr)
        return EXIT_OBSTRUCTION
    except _NOTHING_ERRORS as exc:
        print(f"nothing found: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOTHING
    except _INPUT_ERRORS as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HopfBalanceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:        # last-resort exit code for unexpected failures
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
