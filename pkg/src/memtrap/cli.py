"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (JSON). Values given as flags
override the file, and the file overrides built-in defaults. Nested objects
such as ``{"thermal": {"tol_k": 0.01}}`` are read as dotted keys
(``thermal.tol_k``). Unknown keys are rejected.

Exit codes: 0 success, 1 invalid input, 2 solver failure (non-convergence or
no trap).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .atomtrap import BLUE_NM, RED_NM, TwoColorTrap
from .errors import ConvergenceError, MemtrapError, NoTrapError, ValidationError
from .geometry import MaterialProperties, WaveguideCrossSection, make_design, rasterize_mask
from .modesolver import solve_mode
from .output import atomic_write, content_hash, csv_text, grid_csv
from .powerlab import ScatterTrace, fit_propagation_loss
from .sweep import SweepSpec, grid_sweep, optimize_depth_per_mw
from .thermal import (CALIBRATED, CALIBRATION_ANCHORS, SolverSettings, anchor_peaks, calibrate,
                      failure_power, failure_power_curve, steady_state_temperature)
from .thinfilm import find_ar_thickness, membrane_transmission_report, report_csv

log = logging.getLogger("memtrap")

DEFAULTS = {
    # design
    "variant": "infinity",
    "span_um": None,
    "gap_um": None,
    "hole_diameter_um": None,
    "window_mm": 6.0,
    "w_strip_um": CALIBRATED["w_strip_um"] or 10.0,
    "w_taper_um": 100.0,
    "cell_um": 5.0,
    # cross-section
    "w_wg_um": 1.6,
    "t_wg_nm": 100.0,
    "t_mem_nm": 50.0,
    "n_core": 1.76,
    # material
    "k_w_per_mk": 1.0,
    "alpha_db_per_cm": 1.0,
    "emissivity": CALIBRATED["emissivity"] if CALIBRATED["emissivity"] is not None else 0.05,
    "t_fail_k": 2354.0,
    "t_amb_k": 300.0,
    "absorbed_fraction": 1.0,
    # thermal solver
    "thermal.tol_k": 0.01,
    "thermal.max_iter": 10000,
    "thermal.relax": 1.0,
    # optics
    "lambda_nm": 937.0,
    "h_nm": 10.0,
    "p_blue_mw": 3.27,
    "p_red_mw": 2.73,
    "power_mw": 10.0,
    # film
    "film.n": 1.76,
    "film.lambda_nm": 852.0,
    "film.theta_deg": 45.0,
    "film.d_nm": [25.0, 50.0, 75.0],
    # failure curve
    "spans_um": [125.0, 250.0, 400.0, 500.0],
    # sweep
    "sweep.w_wg_um": None,
    "sweep.t_wg_nm": [75.0, 100.0, 125.0, 150.0],
    "sweep.t_mem_nm": [25.0, 50.0, 75.0],
    "sweep.objective": "depth_per_mw",
    "sweep.power_mw": 1.0,
    "sweep.max_points": 200,
}


class _Parser(argparse.ArgumentParser):
    """Argument errors print usage to stderr and exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _flatten(obj: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"no such file {path}", "config") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", "config") from None
    if not isinstance(raw, dict):
        raise ValidationError("top level must be an object", "config")
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ValidationError(f"unknown keys: {', '.join(unknown)}", "config")
    return flat


def resolve_config(args) -> dict:
    """Defaults, then the config file, then flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key.replace(".", "__"), None)
        if value is not None:
            cfg[key] = value
    return cfg


# -- builders -----------------------------------------------------------------

def _num(cfg, key):
    value = cfg[key]
    if value is None:
        raise ValidationError("required", key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"expected a number, got {value!r}", key)
    return float(value)


def xsection_from(cfg) -> WaveguideCrossSection:
    return WaveguideCrossSection(_num(cfg, "w_wg_um"), _num(cfg, "t_wg_nm"), _num(cfg, "t_mem_nm"),
                                 _num(cfg, "n_core"))


def material_from(cfg) -> MaterialProperties:
    return MaterialProperties(_num(cfg, "k_w_per_mk"), _num(cfg, "alpha_db_per_cm"),
                              _num(cfg, "emissivity"), _num(cfg, "t_fail_k"), _num(cfg, "t_amb_k"),
                              _num(cfg, "absorbed_fraction"))


def settings_from(cfg) -> SolverSettings:
    return SolverSettings(_num(cfg, "thermal.tol_k"), int(_num(cfg, "thermal.max_iter")),
                          _num(cfg, "thermal.relax"))


def design_from(cfg):
    variant = str(cfg["variant"])
    span = cfg["hole_diameter_um"] if variant == "infinity" and cfg["hole_diameter_um"] is not None \
        else cfg["span_um"]
    if span is None:
        raise ValidationError("required", "span_um")
    gap = cfg["gap_um"]
    return make_design(variant, float(span), None if gap is None else float(gap),
                       _num(cfg, "window_mm"))


def _emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------

def cmd_mode(args, cfg):
    xs = xsection_from(cfg)
    mode = solve_mode(xs, _num(cfg, "lambda_nm"), _num(cfg, "h_nm"), half_domain=args.half_domain)
    if args.field:
        atomic_write(args.field, mode.to_csv())
    print(mode.summary())
    return 0


def cmd_film(args, cfg):
    n, lam, theta = _num(cfg, "film.n"), _num(cfg, "film.lambda_nm"), _num(cfg, "film.theta_deg")
    if args.ar:
        print(f"ar_thickness_nm: {find_ar_thickness(n, lam, theta):.4f}")
        return 0
    rows = membrane_transmission_report(cfg["film.d_nm"], lam, theta, n)
    _emit(report_csv(rows), args.out)
    return 0


def cmd_trap(args, cfg):
    xs = xsection_from(cfg)
    trap = TwoColorTrap(xs, _num(cfg, "h_nm"), half_domain=args.half_domain)
    report = trap.report(_num(cfg, "p_blue_mw"), _num(cfg, "p_red_mw"))
    if args.map:
        atomic_write(args.map, report.potential.to_csv())
    _emit(report.to_text(), args.out)
    return 0


def cmd_thermal(args, cfg):
    design = design_from(cfg)
    mask = rasterize_mask(design, xsection_from(cfg), _num(cfg, "cell_um"),
                          w_strip_um=_num(cfg, "w_strip_um"), w_taper_um=_num(cfg, "w_taper_um"))
    mat = material_from(cfg)
    fld = steady_state_temperature(mask, mat, _num(cfg, "power_mw"), settings_from(cfg))
    if args.field:
        atomic_write(args.field, grid_csv(mask.x_um, mask.y_um, fld.temperature_k,
                                          ("x_um", "y_um", "T_K")))
    lines = [f"variant: {cfg['variant']}", f"span_um: {design.span_um:.6g}",
             f"power_mw: {fld.power_mw:.6g}", f"peak_k: {fld.peak_k:.6g}",
             f"newton_iterations: {fld.iterations}"]
    lines += [f"{k}: {v:.6g}" for k, v in fld.balance.items()]
    if args.fail:
        lines.append(f"p_fail_mw: {failure_power(mask, mat, settings_from(cfg)):.6g}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _curve_csv(rows) -> str:
    return csv_text(("span_um", "p_fail_mw"), rows)


def cmd_failcurve(args, cfg):
    rows = failure_power_curve(str(cfg["variant"]), sorted(cfg["spans_um"]), material_from(cfg),
                               xsection_from(cfg), cell_um=_num(cfg, "cell_um"),
                               w_strip_um=_num(cfg, "w_strip_um"),
                               w_taper_um=_num(cfg, "w_taper_um"), settings=settings_from(cfg))
    _emit(_curve_csv(rows), args.out)
    return 0


def cmd_fitloss(args, cfg):
    fit = fit_propagation_loss(ScatterTrace.read_csv(args.trace))
    if args.json:
        atomic_write(args.json, fit.to_json() + "\n")
    sys.stdout.write(fit.to_text())
    return 0


def _sweep_spec(cfg) -> SweepSpec:
    axes = {}
    for name in ("w_wg_um", "t_wg_nm", "t_mem_nm"):
        values = cfg[f"sweep.{name}"]
        if values:
            axes[name] = values
    design = {}
    if cfg["sweep.objective"] == "p_fail":
        design = dict(design_variant=str(cfg["variant"]), span_um=_num(cfg, "span_um"),
                      gap_um=cfg["gap_um"], cell_um=_num(cfg, "cell_um"),
                      material=material_from(cfg), w_strip_um=_num(cfg, "w_strip_um"))
    return SweepSpec(axes, objective=str(cfg["sweep.objective"]), base=xsection_from(cfg),
                     blue_fraction=_num(cfg, "p_blue_mw") / (_num(cfg, "p_blue_mw") + _num(cfg, "p_red_mw")),
                     power_mw=_num(cfg, "sweep.power_mw"), h_nm=_num(cfg, "h_nm"),
                     max_points=int(_num(cfg, "sweep.max_points")), **design)


def cmd_sweep(args, cfg):
    spec = _sweep_spec(cfg)
    if args.optimize:
        bounds = {}
        for item in args.optimize:
            name, _, rng = item.partition("=")
            lo_hi = _floats(rng)
            if name not in spec.axes or len(lo_hi) != 2:
                raise ValidationError(f"expected AXIS=LOW,HIGH for a swept axis, got {item!r}",
                                      "optimize")
            bounds[name] = tuple(lo_hi)
        for name in spec.axes:
            bounds.setdefault(name, (min(spec.axes[name]), max(spec.axes[name])))
        res = optimize_depth_per_mw(bounds, spec)
        _emit(res.grid.to_csv(), args.out)
        print("".join(f"best_{k}: {v:.6g}\n" for k, v in res.params.items())
              + f"best_depth_uk_per_mw: {res.objective:.6g}\n"
              + f"grid_best_depth_uk_per_mw: {res.seed_objective:.6g}\n", end="",
              file=sys.stderr if not args.out else sys.stdout)
        return 0
    _emit(grid_sweep(spec).to_csv(), args.out)
    return 0


def cmd_calibrate(args, cfg):
    eps, strip, peaks = calibrate(cell_um=_num(cfg, "cell_um"), mat=material_from(cfg),
                                  xsection=xsection_from(cfg), max_evals=args.max_evals)
    print(f"emissivity: {eps:.6g}\nw_strip_um: {strip:.6g}")
    for (design, p, target), peak in zip(CALIBRATION_ANCHORS, peaks):
        print(f"peak_{type(design).__name__.lower()}_k: {peak:.6g} (target {target:g})")
    return 0


def cmd_report(args, cfg):
    out = Path(args.out_dir)
    t_start = time.perf_counter()
    summary = {}
    written = []

    film_rows = membrane_transmission_report(cfg["film.d_nm"], _num(cfg, "film.lambda_nm"),
                                             _num(cfg, "film.theta_deg"), _num(cfg, "film.n"))
    written.append(atomic_write(out / "film.csv", report_csv(film_rows)))
    summary["film_ar_thickness_nm"] = find_ar_thickness(
        _num(cfg, "film.n"), _num(cfg, "film.lambda_nm"), _num(cfg, "film.theta_deg"))
    for d, _, _, tc in film_rows:
        summary[f"film_T_circ_{d:g}nm"] = tc

    xs = xsection_from(cfg)
    trap = TwoColorTrap(xs, _num(cfg, "h_nm"), half_domain=args.half_domain)
    rep = trap.report(_num(cfg, "p_blue_mw"), _num(cfg, "p_red_mw"))
    written.append(atomic_write(out / "trap.txt", rep.to_text()))
    summary["trap_depth_uk"] = rep.depth_uk
    summary["trap_height_nm"] = rep.height_nm
    summary["trap_depth_20.6mw_uk"] = trap.depth(20.6)
    summary["trap_depth_30mw_uk"] = trap.depth(30.0)

    mat = material_from(cfg)
    peaks = anchor_peaks(mat.emissivity, _num(cfg, "w_strip_um"), cell_um=_num(cfg, "cell_um"),
                         mat=mat, xsection=xs)
    for (design, p, target), peak in zip(CALIBRATION_ANCHORS, peaks):
        summary[f"peak_{type(design).__name__.lower()}_{p:g}mw_k"] = peak

    rows = []
    for family in ("straight", "hybrid_needle", "infinity"):
        try:
            curve = failure_power_curve(family, sorted(cfg["spans_um"]), mat, xs,
                                        cell_um=_num(cfg, "cell_um"),
                                        w_strip_um=_num(cfg, "w_strip_um"),
                                        w_taper_um=_num(cfg, "w_taper_um"),
                                        settings=settings_from(cfg))
        except ConvergenceError as exc:
            log.warning("failure curve for %s: %s", family, exc)
            curve = [(s, math.nan) for s in sorted(cfg["spans_um"])]
        rows += [(family, s, p) for s, p in curve]
        for s, p in curve:
            summary[f"p_fail_{family}_{s:g}um_mw"] = p
    written.append(atomic_write(out / "failcurve.csv",
                                csv_text(("variant", "span_um", "p_fail_mw"), rows)))

    summary["runtime_s"] = time.perf_counter() - t_start
    record = {
        "version": __version__,
        "config": cfg,
        "config_hash": content_hash(cfg, [args.config] if args.config else []),
        "outputs_hash": content_hash({}, written),
        "results": summary,
    }
    atomic_write(out / "summary.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    for key, value in summary.items():
        print(f"{key}: {value:.6g}")
    print(f"config_hash: {record['config_hash']}")
    return 0


# -- parser ---------------------------------------------------------------------

def _add(p, key, type_=float, help_=None):
    flag = "--" + key.replace(".", "-").replace("_", "-").replace("film-", "")
    p.add_argument(flag, dest=key.replace(".", "__"), type=type_, default=None,
                   help=help_ or f"override {key}")


def _xs_flags(p):
    for key in ("w_wg_um", "t_wg_nm", "t_mem_nm", "n_core"):
        _add(p, key)


def _thermal_flags(p):
    p.add_argument("--variant", dest="variant", choices=("straight", "hybrid_needle", "infinity"))
    for key in ("span_um", "gap_um", "hole_diameter_um", "w_strip_um", "w_taper_um", "cell_um",
                "k_w_per_mk", "alpha_db_per_cm", "emissivity", "t_fail_k", "t_amb_k",
                "absorbed_fraction", "thermal.tol_k", "thermal.relax"):
        _add(p, key)
    _add(p, "thermal.max_iter", int)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="memtrap", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("mode", parents=[common], help="solve the fundamental quasi-TE mode")
    _xs_flags(p)
    _add(p, "lambda_nm")
    _add(p, "h_nm")
    p.add_argument("--half-domain", action="store_true", help="solve on the symmetric half")
    p.add_argument("--field", help="write the field grid (x_nm,y_nm,E) to this CSV")
    p.set_defaults(func=cmd_mode)

    p = sub.add_parser("film", parents=[common], help="membrane transmission table")
    _add(p, "film.n")
    _add(p, "film.lambda_nm")
    _add(p, "film.theta_deg")
    _add(p, "film.d_nm", _floats, "comma-separated thicknesses in nm")
    p.add_argument("--ar", action="store_true", help="print the fully transmitting thickness")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_film)

    p = sub.add_parser("trap", parents=[common], help="two-color trap report")
    _xs_flags(p)
    _add(p, "h_nm")
    _add(p, "p_blue_mw")
    _add(p, "p_red_mw")
    p.add_argument("--half-domain", action="store_true")
    p.add_argument("--map", help="write the potential grid (x_nm,y_nm,U_uK) to this CSV")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_trap)

    p = sub.add_parser("thermal", parents=[common], help="steady-state temperature of one device")
    _xs_flags(p)
    _thermal_flags(p)
    _add(p, "power_mw")
    p.add_argument("--fail", action="store_true", help="also compute the failure power")
    p.add_argument("--field", help="write the temperature grid (x_um,y_um,T_K) to this CSV")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_thermal)

    p = sub.add_parser("failcurve", parents=[common], help="failure power against span")
    _xs_flags(p)
    _thermal_flags(p)
    _add(p, "spans_um", _floats, "comma-separated spans in um")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_failcurve)

    p = sub.add_parser("fitloss", parents=[common], help="propagation loss from a scatter trace")
    p.add_argument("trace", help="CSV with header position_cm,intensity")
    p.add_argument("--json", help="also write the fit as JSON")
    p.set_defaults(func=cmd_fitloss)

    p = sub.add_parser("sweep", parents=[common], help="grid sweep over the cross-section")
    _xs_flags(p)
    _thermal_flags(p)
    _add(p, "h_nm")
    _add(p, "p_blue_mw")
    _add(p, "p_red_mw")
    for key in ("sweep.w_wg_um", "sweep.t_wg_nm", "sweep.t_mem_nm"):
        p.add_argument("--sweep-" + key[6:].replace("_", "-"), dest=key.replace(".", "__"),
                       type=_floats, default=None, help="comma-separated axis values")
    p.add_argument("--objective", dest="sweep__objective",
                   choices=("depth_per_mw", "depth_at_power", "p_fail"))
    _add(p, "sweep.power_mw")
    _add(p, "sweep.max_points", int)
    p.add_argument("--optimize", action="append", metavar="AXIS=LOW,HIGH",
                   help="refine the best grid point within these bounds (repeatable)")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", parents=[common], help="fit emissivity and strip width")
    _xs_flags(p)
    _thermal_flags(p)
    p.add_argument("--max-evals", type=int, default=40)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", parents=[common], help="run the reproduction suite")
    p.add_argument("--out-dir", default="memtrap-report")
    p.add_argument("--half-domain", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, NoTrapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemtrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
