"""Command-line entry point (``mmwpt`` / ``python -m mmwpt``).

Exit codes: 0 success, 1 domain or solver error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import TRANSMITTER
from .config import ParsedConfig, dump_document, model_to_document, parse_config
from .errors import ConfigError, ModelValidationError, WPTError
from .metrics import closed_form_gain, frequency_response, resonant_frequency
from .sweep import (
    FrequencyGrid,
    TopologySpec,
    bandwidth_3db,
    compare_with_without_mm,
    distance_sweep,
    frequency_sweep,
    slab_position_sweep,
    topology_compare,
)
from .tuner import match_check, optimize_slab_position, tune_compensation_capacitor
from .units import parse_list, parse_quantity

DEFAULT_GRID = FrequencyGrid(10e6, 18e6, 801)


class UsageError(Exception):
    pass


def _f17(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    return "NaN" if math.isnan(x) else f"{x:.17g}"


def _complex(z) -> dict:
    return {"re": _f17(z.real), "im": _f17(z.imag)}


def _workers(value):
    if value is not None:
        return value
    env = os.environ.get("WPT_SIM_WORKERS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"WPT_SIM_WORKERS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("WPT_SIM_WORKERS must be >= 1")
    return n


def _grid(args, cfg: ParsedConfig) -> FrequencyGrid:
    base = cfg.sweep.grid or DEFAULT_GRID
    f_min = parse_quantity(args.fmin, "frequency", "--fmin", "Hz") if args.fmin else base.f_min
    f_max = parse_quantity(args.fmax, "frequency", "--fmax", "Hz") if args.fmax else base.f_max
    points = args.points if args.points is not None else base.points
    return FrequencyGrid(f_min, f_max, points, args.spacing or base.spacing)


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def _csv_text(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_f17(v) for v in row])
    return out.getvalue()


def _emit_sweep(args, result):
    _write(args.out, result.to_csv())
    if args.json:
        _write(args.json, result.to_json() + "\n")


def _need_template(cfg: ParsedConfig):
    if cfg.template is None:
        raise ModelValidationError(
            f"config {cfg.name!r} has no coil layout; distance and position sweeps need analytic, "
            "coefficients or table couplings")
    return cfg.template


def _peak_summary(name, result, out=None):
    rows = []
    for value, (f, mag) in zip(result.values, result.peaks()):
        rows.append((value, f, mag, 100 * mag * mag))
    text = _csv_text((name, "peak_frequency_hz", "peak_s21_mag", "peak_pte_percent"), rows)
    sys.stdout.write(text)
    if out:
        _write(out, text)


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args, cfg):
    f = parse_quantity(args.freq, "frequency", "--freq", "Hz")
    model = cfg.model
    resp = frequency_response(model, f)
    rep = match_check(model, 2 * math.pi * f)
    doc = {
        "config": cfg.name,
        "frequency_hz": _f17(f),
        "currents": {label: _complex(i) for label, i in zip(model.labels, resp.currents)},
        "v_load": _complex(resp.v_load),
        "gain": _complex(resp.gain),
        "s21": _complex(resp.s21),
        "s21_mag": _f17(abs(resp.s21)),
        "s11": _complex(resp.s11),
        "pte_percent": _f17(resp.pte),
        "z_in": _complex(rep.z_in),
    }
    try:
        doc["closed_form_gain"] = _complex(closed_form_gain(model, 2 * math.pi * f))
    except WPTError:
        doc["closed_form_gain"] = None
    _write(args.out, json.dumps(doc, indent=1) + "\n")


def cmd_sweep_frequency(args, cfg):
    result = frequency_sweep(cfg.model, _grid(args, cfg), args.workers)
    _emit_sweep(args, result)


def cmd_sweep_distance(args, cfg):
    tpl = _need_template(cfg)
    distances = parse_list(args.distances, "length", "--distances", "m") if args.distances else list(cfg.sweep.distances)
    if not distances:
        raise UsageError("no distances given (--distances or sweep.distances)")
    result = distance_sweep(tpl, distances, _grid(args, cfg), args.workers)
    _emit_sweep(args, result)
    _peak_summary("transfer_distance_m", result, args.summary)


def cmd_sweep_position(args, cfg):
    tpl = _need_template(cfg)
    positions = parse_list(args.positions, "length", "--positions", "m") if args.positions else list(cfg.sweep.positions)
    if not positions:
        raise UsageError("no positions given (--positions or sweep.positions)")
    result = slab_position_sweep(tpl, positions, _grid(args, cfg), args.workers)
    _emit_sweep(args, result)
    _peak_summary("slab_position_m", result, args.summary)
    sys.stdout.write(f"best_position_m={_f17(result.best_value())}\n")


def _prefixed(out, suffix):
    p = Path(out)
    return p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}")


def cmd_compare_mm(args, cfg):
    grid = _grid(args, cfg)
    if args.distances or cfg.sweep.distances:
        tpl = _need_template(cfg)
        distances = parse_list(args.distances, "length", "--distances", "m") if args.distances else list(cfg.sweep.distances)
        cmp = compare_with_without_mm(tpl, grid, distances, args.workers)
    else:
        cmp = compare_with_without_mm(cfg.model, grid, workers=args.workers)
    summary = _csv_text(
        ("transfer_distance_m", "normalized_distance", "peak_pte_with_mm", "peak_pte_without_mm", "pte_ratio"),
        cmp.summary_rows())
    if args.out:
        _write(_prefixed(args.out, "with"), cmp.with_mm.to_csv())
        _write(_prefixed(args.out, "without"), cmp.without_mm.to_csv())
        _write(_prefixed(args.out, "summary"), summary)
    sys.stdout.write(summary)


def cmd_compare_topologies(args, cfg):
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    overrides = {}
    if args.k is not None:
        overrides["k"] = args.k
    specs = [TopologySpec(kind, overrides) for kind in kinds]
    f0 = parse_quantity(args.f0, "frequency", "--f0", "Hz") if args.f0 else None
    result = topology_compare(specs, _grid(args, cfg), f0, args.workers)
    _emit_sweep(args, result)
    rows = []
    for i, label in enumerate(result.labels):
        f, mag = result.peak(i)
        rows.append((label, f, 100 * mag * mag, bandwidth_3db(result, i)))
    sys.stdout.write(_csv_text(("topology", "peak_frequency_hz", "peak_pte_percent", "bandwidth_3db_hz"), rows))


def cmd_tune_cap(args, cfg):
    cell = cfg.cell
    if cell is None:
        raise ModelValidationError(f"config {cfg.name!r} has no mm_cells block to tune")
    if args.inductance:
        cell = replace(cell, inductance=parse_quantity(args.inductance, "inductance", "--inductance"))
    if args.target:
        target = parse_quantity(args.target, "frequency", "--target", "Hz")
    elif cfg.tuner.target is not None:
        target = cfg.tuner.target
    else:
        raise UsageError("no target given (--target or tuner.target)")
    res = tune_compensation_capacitor(cell, target)
    lines = (
        f"target_hz={_f17(target)}\n"
        f"c_compensation_pF={_f17(res.tuned_value * 1e12)}\n"
        f"c_total_pF={_f17(res.cell.capacitance * 1e12)}\n"
        f"achieved_hz={_f17(res.achieved_objective)}\n"
    )
    sys.stdout.write(lines)
    if args.out:
        _write(args.out, lines)


def cmd_optimize_position(args, cfg):
    tpl = _need_template(cfg)
    if args.bounds:
        bounds = parse_list(args.bounds, "length", "--bounds", "m")
        if len(bounds) != 2:
            raise UsageError("--bounds takes two lengths, e.g. 20mm,380mm")
    elif cfg.tuner.bounds:
        bounds = cfg.tuner.bounds
    else:
        d = tpl.transfer_distance
        bounds = (0.05 * d, 0.95 * d)
    res = optimize_slab_position(tpl, bounds, _grid(args, cfg), workers=args.workers)
    lines = (
        f"position_m={_f17(res.tuned_value)}\n"
        f"peak_s21_mag={_f17(res.achieved_objective)}\n"
        f"iterations={res.iterations}\n"
        f"converged={str(res.converged).lower()}\n"
        f"unimodal={str(res.unimodal).lower()}\n"
    )
    sys.stdout.write(lines)
    if args.out:
        _write(args.out, lines)


def cmd_match_check(args, cfg):
    if args.freq:
        f = parse_quantity(args.freq, "frequency", "--freq", "Hz")
    else:
        model = cfg.model
        role = TRANSMITTER if model.has_role(TRANSMITTER) else model.roles[0]
        tx = model.resonators[model.index_of(role)].params
        f = resonant_frequency(tx.inductance, tx.capacitance)
    rep = match_check(cfg.model, 2 * math.pi * f)
    lines = (
        f"frequency_hz={_f17(f)}\n"
        f"z_in_re={_f17(rep.z_in.real)}\n"
        f"z_in_im={_f17(rep.z_in.imag)}\n"
        f"s11_mag={_f17(rep.s11_mag)}\n"
        f"s21_mag={_f17(abs(rep.s21))}\n"
        f"matched={str(rep.matched).lower()}\n"
    )
    sys.stdout.write(lines)
    if args.out:
        _write(args.out, lines)


def cmd_dump_config(args, cfg):
    _write(args.out, dump_document(model_to_document(cfg.model, cfg.name)))


# --- parser ------------------------------------------------------------------

def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwpt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mmwpt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="preset name or path to a JSON config")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="sweep worker threads (default: $WPT_SIM_WORKERS or 1); no effect on results")
    common.add_argument("--out", help="output file (default: stdout where applicable)")
    common.add_argument("--seedless", action="store_true",
                        help="accepted for scripts; the tool never uses randomness")

    gridargs = argparse.ArgumentParser(add_help=False)
    gridargs.add_argument("--fmin", help="start frequency, e.g. 10e6 or '10 MHz'")
    gridargs.add_argument("--fmax", help="stop frequency")
    gridargs.add_argument("--points", type=_positive_int, help="grid points (>= 2)")
    gridargs.add_argument("--spacing", choices=("linear", "logarithmic"))
    gridargs.add_argument("--json", help="also write the SweepResult JSON document here")

    def add(name, func, helptext, parents=(common,)):
        p = sub.add_parser(name, parents=list(parents), help=helptext)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "solve one frequency and print the response as JSON")
    p.add_argument("--freq", required=True)
    add("sweep-frequency", cmd_sweep_frequency, "frequency sweep to CSV", (common, gridargs))
    p = add("sweep-distance", cmd_sweep_distance, "transfer-distance sweep", (common, gridargs))
    p.add_argument("--distances", help="comma-separated lengths, e.g. 100mm,150mm")
    p.add_argument("--summary", help="write the per-distance peak table here")
    p = add("sweep-position", cmd_sweep_position, "slab-position sweep", (common, gridargs))
    p.add_argument("--positions", help="comma-separated slab positions from the transmitter")
    p.add_argument("--summary", help="write the per-position peak table here")
    p = add("compare-mm", cmd_compare_mm, "with/without metamaterial comparison", (common, gridargs))
    p.add_argument("--distances", help="comma-separated transfer distances")
    p = add("compare-topologies", cmd_compare_topologies, "two-coil / four-coil / CLC comparison",
            (common, gridargs))
    p.add_argument("--kinds", default="two_coil,four_coil,clc")
    p.add_argument("--k", type=float, help="tx-rx coupling coefficient shared by all topologies")
    p.add_argument("--f0", help="common tuning frequency")
    p = add("tune-cap", cmd_tune_cap, "compensation capacitance for a target resonance")
    p.add_argument("--target", help="target frequency, e.g. 13.56e6")
    p.add_argument("--inductance", help="override the cell inductance, e.g. '1.49 uH'")
    p = add("optimize-position", cmd_optimize_position, "golden-section search for the best slab position",
            (common, gridargs))
    p.add_argument("--bounds", help="two lengths, e.g. 20mm,380mm")
    p = add("match-check", cmd_match_check, "input impedance and |S11| at one frequency")
    p.add_argument("--freq", help="frequency (default: transmitter resonance)")
    add("dump-config", cmd_dump_config, "write the parsed model as an explicit config")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.workers = _workers(args.workers)
        cfg = parse_config(args.config)
        args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mmwpt: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"mmwpt: error: ConfigError: {exc}", file=sys.stderr)
        return 1
    except (WPTError, np.linalg.LinAlgError) as exc:
        print(f"mmwpt: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
