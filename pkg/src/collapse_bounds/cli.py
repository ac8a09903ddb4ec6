"""Command-line entry point: ``collapse-bounds {predict,exclude,fit-ringdown,fit-pressure,validate}``.

Exit codes: 0 success, 1 validation-suite failure, 2 input or configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

import numpy as np

from . import config as cfgmod
from . import validation
from .collapse_models import CgfParams, DcslParams, DdpParams, cgf_gamma, dcsl_rates, ddp_rates
from .core import NumericalError, RegimeWarning, ValidationError
from .exclusion import ExclusionCurve, cgf_curve, dcsl_curve, ddp_curve
from .measurement import (PressureSeries, RingdownSeries, fit_pressure_extrapolation,
                          fit_ringdown, thermomolecular_correct)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(x) -> str:
    """17 significant digits (round-trips a double); missing bounds become ``none``."""
    if x is None:
        return "none"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj, stream=None):
    stream = stream or sys.stdout
    json.dump(_jsonable(obj), stream, indent=2, sort_keys=True)
    stream.write("\n")


# ------------------------------------------------------------------ CSV input

def read_table(path: str, columns: tuple) -> dict:
    """Read a headed numeric CSV; errors name the offending line."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError("input", f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValidationError("input", f"{path}: empty file")
    line, header = rows[0]
    header = [h.strip() for h in header]
    missing = [c for c in columns if c not in header]
    if missing:
        raise ValidationError("input", f"{path} line {line}: header lacks columns {missing}")
    idx = [header.index(c) for c in columns]
    out = {c: [] for c in columns}
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise ValidationError("input", f"{path} line {line}: expected {len(header)} fields, got {len(row)}")
        for c, j in zip(columns, idx):
            try:
                v = float(row[j])
            except ValueError:
                raise ValidationError("input", f"{path} line {line}: {c}={row[j]!r} is not a number") from None
            if not math.isfinite(v):
                raise ValidationError("input", f"{path} line {line}: {c} is not finite")
            out[c].append(v)
    return {c: np.array(v) for c, v in out.items()}


# ------------------------------------------------------------------ curve output

def _label(value) -> str:
    if value is None:
        return "light_speed"
    return format(value, "g").replace("+", "")


def curve_csv(curve: ExclusionCurve, digest: str, fixed_label: str) -> str:
    lines = [f"# model: {curve.model}",
             f"# config_sha256: {digest}",
             f"# fixed: {fixed_label}",
             f"# gamma0_per_s: {fmt(curve.bound_gamma0)}"]
    out = "\r\n".join(lines) + "\r\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([curve.abscissa_name, curve.ordinate_name])
    for x, y in curve.points:
        w.writerow([fmt(x), fmt(y)])
    return out + buf.getvalue()


def _write_curve(curve: ExclusionCurve, out_dir: str, stem: str, digest: str, fixed_label: str,
                 resolved: dict) -> str:
    path = os.path.join(out_dir, stem + ".csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(curve_csv(curve, digest, fixed_label))
    side = {"model": curve.model, "file": stem + ".csv", "config_sha256": digest,
            "abscissa": curve.abscissa_name, "ordinate": curve.ordinate_name,
            "bound_gamma0_per_s": curve.bound_gamma0,
            "bound_linewidth_hz": curve.bound_gamma0 / (2.0 * math.pi),
            "fixed_params": curve.fixed_params, "metadata": curve.metadata,
            "points": len(curve.points),
            "no_bound_points": sum(1 for _, y in curve.points if y is None),
            "config": resolved}
    with open(os.path.join(out_dir, stem + ".json"), "w", encoding="utf-8") as fh:
        _dump(side, fh)
    return path


def _grid(block: dict) -> np.ndarray:
    if block["log"]:
        return np.geomspace(block["min"], block["max"], block["points"])
    return np.linspace(block["min"], block["max"], block["points"])


def _parse_grid(text: str) -> dict:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError("grid", "expected min,max,n,log")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError("grid", f"cannot parse {text!r}") from None
    flag = parts[3].strip().lower()
    if flag not in ("log", "lin", "true", "false"):
        raise ValidationError("grid", "last field must be log or lin")
    return {"min": lo, "max": hi, "points": n, "log": flag in ("log", "true")}


def _apply_overrides(cfg_doc: dict, args) -> dict:
    doc = dict(cfg_doc)
    if getattr(args, "gamma0_hz", None) is not None:
        doc["gamma0"] = {**doc.get("gamma0", {}), "linewidth_hz": args.gamma0_hz}
    if getattr(args, "grid", None):
        block = dict(doc.get(args.model, {}))
        block["grid"] = _parse_grid(args.grid)
        doc[args.model] = block
    if getattr(args, "threads", None) is not None:
        doc["output"] = {**doc.get("output", {}), "threads": args.threads}
    if getattr(args, "out", None) is not None:
        doc["output"] = {**doc.get("output", {}), "dir": args.out}
    return doc


def _load(args) -> dict:
    doc = cfgmod.read_document(args.config) if args.config else {}
    return cfgmod.validate_config(_apply_overrides(doc, args), strict=not args.lax)


# ------------------------------------------------------------------ commands

def cmd_predict(args) -> int:
    cfg = _load(args)
    consts = cfgmod.build_constants(cfg)
    sphere = cfgmod.build_sphere(cfg)
    point = dict(cfg[args.model]["point"])
    for item in args.set or ():
        key, _, value = item.partition("=")
        if key not in point:
            raise ValidationError(key, f"unknown point parameter for {args.model}; "
                                       f"expected one of {sorted(point)}")
        if key in ("T_c", "T_DP", "corr_rate") and value in ("inf", "light_speed"):
            point[key] = value
        else:
            try:
                point[key] = float(value)
            except ValueError:
                raise ValidationError(key, f"cannot parse {value!r} as a number") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegimeWarning)
        if args.model == "dcsl":
            u = consts.atomic_mass_unit
            p = DcslParams(point["lambda"], point["r_c"], cfgmod.parse_temperature(point["T_c"]),
                           cfg["dcsl"]["m_a_u"] * u)
            pred = dcsl_rates(sphere, p, consts)
            eta, gamma, chi, notes = pred.eta, pred.gamma, pred.chi, list(pred.warnings)
        elif args.model == "ddp":
            policy = cfgmod.build_mass_policy(point["mass_policy"], cfg)
            p = DdpParams(point["R0"], cfgmod.parse_temperature(point["T_DP"]), policy)
            pred = ddp_rates(sphere, p, cfg["ddp"]["regime"], consts)
            eta, gamma, chi, notes = pred.eta, pred.gamma, pred.chi, list(pred.warnings)
            R0p = p.resolve(consts).R0_prime
            if policy.self_consistent and R0p > sphere.radius:
                notes.append(f"R0'={R0p:.3g} m exceeds the particle radius; exclusion treats "
                             "this point as predicting no damping")
        else:
            p = CgfParams(point["xi"], point["r_c"], cfgmod.parse_rate(point["corr_rate"]))
            eta, gamma, chi, notes = None, cgf_gamma(sphere, p, consts), None, []
    notes += [str(w.message) for w in caught]
    _dump({"model": args.model, "point": point, "eta_per_m2_s": eta, "gamma_per_s": gamma,
           "linewidth_hz": gamma / (2.0 * math.pi), "chi": chi, "warnings": notes,
           "config_sha256": cfgmod.config_hash(cfg)})
    return EXIT_OK


def build_curves(cfg: dict, model: str) -> list:
    """(stem, fixed label, curve) for every fixed-parameter value of ``model``."""
    consts = cfgmod.build_constants(cfg)
    sphere = cfgmod.build_sphere(cfg)
    gamma0 = 2.0 * math.pi * cfg["gamma0"]["linewidth_hz"]
    threads = cfg["output"]["threads"]
    block = cfg[model]
    grid = _grid(block["grid"])
    out = []
    if model == "dcsl":
        m_a = block["m_a_u"] * consts.atomic_mass_unit
        for t in block["T_c"]:
            T_c = cfgmod.parse_temperature(t)
            curve = dcsl_curve(grid, T_c, gamma0, sphere, m_a, consts, workers=threads)
            out.append((f"dcsl_Tc_{_label(T_c)}", f"T_c={fmt(T_c)} K", curve))
    elif model == "ddp":
        for pol_block in block["mass_policies"]:
            policy = cfgmod.build_mass_policy(pol_block, cfg)
            curve = ddp_curve(grid, gamma0, sphere, policy, block["regime"], consts,
                              workers=threads, require_fit=block["require_fit"],
                              t_range=tuple(block["t_range"]))
            out.append((f"ddp_{policy.kind}", f"mass_policy={policy.kind}", curve))
    else:
        for r in block["corr_rates"]:
            rate = cfgmod.parse_rate(r)
            curve = cgf_curve(grid, gamma0, sphere, rate, consts, workers=threads)
            out.append((f"cgf_rate_{_label(rate)}", f"corr_rate={_label(rate)}", curve))
    return out


def _copy_overlay(src: str, out_dir: str) -> str:
    """Validate a two-column (x, y) polyline CSV and copy it next to the curves."""
    rows = []
    with open(src, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(row[0]), float(row[1])])
            except (ValueError, IndexError):
                if rows:
                    raise ValidationError("overlay", f"{src} line {i}: expected two numbers") from None
    if not rows:
        raise ValidationError("overlay", f"{src}: no numeric rows")
    dest = os.path.join(out_dir, "overlay_" + os.path.basename(src))
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["x", "y"])
        for x, y in rows:
            w.writerow([fmt(x), fmt(y)])
    return dest


def cmd_exclude(args) -> int:
    cfg = _load(args)
    digest = cfgmod.config_hash(cfg)
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for stem, label, curve in build_curves(cfg, args.model):
        written.append(_write_curve(curve, out_dir, stem, digest, label, cfg))
    if args.overlay:
        written.append(_copy_overlay(args.overlay, out_dir))
    _dump({"model": args.model, "config_sha256": digest, "files": written})
    return EXIT_OK


def cmd_fit_ringdown(args) -> int:
    data = read_table(args.csv, ("t_s", "amplitude", "sigma"))
    series = RingdownSeries(data["t_s"], data["amplitude"], data["sigma"], args.noise_floor)
    fit = fit_ringdown(series)
    _dump({"tau_s": fit.tau, "tau_sigma_s": fit.tau_sigma, "amplitude0": fit.amplitude0,
           "gamma_per_s": fit.gamma, "gamma_sigma_per_s": fit.gamma_sigma,
           "linewidth_hz": fit.gamma_linewidth_hz,
           "linewidth_sigma_hz": fit.gamma_sigma / (2.0 * math.pi),
           "chi2_reduced": fit.chi2_reduced, "iterations": fit.iterations,
           "warnings": list(fit.warnings)})
    return EXIT_OK


def cmd_fit_pressure(args) -> int:
    cfg = _load(args)
    data = read_table(args.csv, ("pressure_mbar", "linewidth_hz", "sigma_hz"))
    pressure = data["pressure_mbar"]
    if args.correct_thermomolecular:
        pressure = thermomolecular_correct(pressure, cfgmod.build_gas(cfg))
    level = args.confidence if args.confidence is not None else cfg["gamma0"]["confidence"]
    series = PressureSeries(pressure, data["linewidth_hz"], data["sigma_hz"], level)
    bound = fit_pressure_extrapolation(series, quantile_family=args.quantile)
    c0, c1, c2 = bound.fit_coefficients
    _dump({"coefficients": {"c0_hz": c0, "c1_hz_per_mbar": c1, "c2_hz_per_mbar2": c2},
           "covariance": bound.covariance, "chi2_reduced": bound.chi2_reduced,
           "confidence_level": bound.confidence_level, "quantile": bound.quantile,
           "quantile_family": bound.quantile_family,
           "upper_bound_linewidth_hz": bound.gamma0_linewidth_hz,
           "upper_bound_gamma_per_s": bound.gamma0,
           "thermomolecular_corrected": bool(args.correct_thermomolecular)})
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    results = validation.run_all(cfgmod.build_constants(cfg))
    ok = all(r["passed"] for r in results)
    _dump({"passed": ok, "checks": results})
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--lax", action="store_true",
                        help="warn about unknown config keys instead of rejecting them")

    parser = argparse.ArgumentParser(prog="collapse-bounds",
                                     description="Collapse-model damping rates and exclusion curves.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[common], help="rates at one parameter point (JSON)")
    p.add_argument("--model", choices=("dcsl", "ddp", "cgf"), required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a point parameter, e.g. r_c=1e-7 or T_c=inf (repeatable)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("exclude", parents=[common], help="write exclusion curves (CSV + JSON)")
    p.add_argument("--model", choices=("dcsl", "ddp", "cgf"), required=True)
    p.add_argument("--gamma0-hz", type=float, help="damping bound as a linewidth in Hz")
    p.add_argument("--grid", metavar="min,max,n,log", help="abscissa grid; last field log or lin")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--overlay", metavar="PATH", help="x,y polyline CSV to copy alongside the curves")
    p.add_argument("--threads", type=int, help="worker threads for grid evaluation")
    p.set_defaults(func=cmd_exclude)

    p = sub.add_parser("fit-ringdown", parents=[common], help="fit an amplitude ringdown CSV")
    p.add_argument("csv", help="columns t_s, amplitude, sigma")
    p.add_argument("--noise-floor", type=float, default=0.0, help="added in quadrature to sigma")
    p.set_defaults(func=cmd_fit_ringdown)

    p = sub.add_parser("fit-pressure", parents=[common], help="extrapolate linewidth to zero pressure")
    p.add_argument("csv", help="columns pressure_mbar, linewidth_hz, sigma_hz")
    p.add_argument("--confidence", type=float, help="one-sided confidence level (default 0.9)")
    p.add_argument("--correct-thermomolecular", action="store_true",
                   help="convert warm-gauge readings to the cold-chamber pressure first")
    p.add_argument("--quantile", choices=("normal", "t"), default="normal")
    p.set_defaults(func=cmd_fit_pressure)

    p = sub.add_parser("validate", parents=[common], help="run the numerical self-checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
